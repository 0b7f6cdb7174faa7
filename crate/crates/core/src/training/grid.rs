use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::Sentence;
use crate::numerics::Scalar;

use super::config::{parse_key_values, KeyValue};
use super::{fit, parse, HyperParams, Pretrained, Result, TrainConfig, TrainError};

/// Candidate values for every hyperparameter; the grid is their product.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperGrid {
    pub char_dim: Vec<usize>,
    pub bigram_dim: Vec<usize>,
    pub lr0: Vec<f64>,
    pub decay_steps: Vec<u64>,
    pub input_dropout: Vec<f64>,
    pub recurrent_dropout: Vec<f64>,
    pub mu: Vec<f64>,
}

impl HyperGrid {
    /// The tuned grid: 3 bigram sizes, 3 learning rates, 3 schedules,
    /// 7 input and 4 recurrent dropout rates.
    pub fn full() -> Self {
        HyperGrid {
            char_dim: vec![64],
            bigram_dim: vec![16, 32, 64],
            lr0: vec![0.04, 0.035, 0.03],
            decay_steps: vec![32_000, 48_000, 64_000],
            input_dropout: vec![0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6],
            recurrent_dropout: vec![0.1, 0.2, 0.3, 0.4],
            mu: vec![0.95],
        }
    }

    /// A one-point grid.
    pub fn single(hp: &HyperParams) -> Self {
        HyperGrid {
            char_dim: vec![hp.char_dim],
            bigram_dim: vec![hp.bigram_dim],
            lr0: vec![hp.lr0],
            decay_steps: vec![hp.decay_steps],
            input_dropout: vec![hp.input_dropout],
            recurrent_dropout: vec![hp.recurrent_dropout],
            mu: vec![hp.mu],
        }
    }

    pub fn len(&self) -> usize {
        self.char_dim.len()
            * self.bigram_dim.len()
            * self.lr0.len()
            * self.decay_steps.len()
            * self.input_dropout.len()
            * self.recurrent_dropout.len()
            * self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every point, with the last field varying fastest.
    pub fn points(&self) -> Vec<HyperParams> {
        let mut out = Vec::with_capacity(self.len());
        for &char_dim in &self.char_dim {
            for &bigram_dim in &self.bigram_dim {
                for &lr0 in &self.lr0 {
                    for &decay_steps in &self.decay_steps {
                        for &input_dropout in &self.input_dropout {
                            for &recurrent_dropout in &self.recurrent_dropout {
                                for &mu in &self.mu {
                                    out.push(HyperParams {
                                        char_dim,
                                        bigram_dim,
                                        lr0,
                                        decay_steps,
                                        input_dropout,
                                        recurrent_dropout,
                                        mu,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Replaces one value set from a comma-separated list. `Ok(false)` for an
    /// unknown key.
    pub fn set(&mut self, key: &str, values: &str) -> std::result::Result<bool, String> {
        fn list<T: std::str::FromStr>(key: &str, values: &str) -> std::result::Result<Vec<T>, String> {
            let v: Vec<T> = values.split(',').map(|x| parse(key, x)).collect::<std::result::Result<_, _>>()?;
            Ok(v)
        }
        match key {
            "char_dim" => self.char_dim = list(key, values)?,
            "bigram_dim" => self.bigram_dim = list(key, values)?,
            "lr0" => self.lr0 = list(key, values)?,
            "decay_steps" => self.decay_steps = list(key, values)?,
            "input_dropout" => self.input_dropout = list(key, values)?,
            "recurrent_dropout" => self.recurrent_dropout = list(key, values)?,
            "mu" => self.mu = list(key, values)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Builds a grid and training config from grid-file entries. Hyperparameter
/// keys take comma-separated lists and default to a single default value;
/// any other key is a training setting.
pub fn grid_from_entries(entries: &[KeyValue], path: &str) -> Result<(HyperGrid, TrainConfig)> {
    let mut grid = HyperGrid::single(&HyperParams::default());
    let mut cfg = TrainConfig::default();
    for e in entries {
        let err = |msg: String| TrainError::ConfigLine {
            path: path.to_owned(),
            line: e.line,
            msg,
        };
        if !grid.set(&e.key, &e.value).map_err(err)? && !cfg.set(&e.key, &e.value).map_err(err)? {
            return Err(err(format!("unknown key {:?}", e.key)));
        }
    }
    if grid.is_empty() {
        return Err(TrainError::Config(format!("{path}: grid is empty")));
    }
    for hp in grid.points() {
        hp.validate()?;
    }
    Ok((grid, cfg))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<(HyperGrid, TrainConfig)> {
    let p = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(path.as_ref()).map_err(|source| TrainError::Io { path: p.clone(), source })?;
    grid_from_entries(&parse_key_values(&text, &p)?, &p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub hp: HyperParams,
    pub dev_f1: f64,
    pub steps: u64,
}

fn run_points<F: Scalar>(
    points: &[HyperParams],
    train: &[Sentence],
    dev: &[Sentence],
    cfg: &TrainConfig,
    pretrained: Option<&Pretrained>,
) -> Result<Vec<GridResult>> {
    points
        .par_iter()
        .map(|hp| {
            let out = fit::<F>(train, dev, hp, cfg, pretrained)?;
            log::info!("grid point {hp} dev_f1={:.4}", 100.0 * out.best.dev_f1);
            Ok(GridResult {
                hp: hp.clone(),
                dev_f1: out.best.dev_f1,
                steps: out.steps,
            })
        })
        .collect()
}

/// Trains every grid point and returns the results sorted by dev F1,
/// best first. Ties keep grid order.
pub fn grid_search<F: Scalar>(
    train: &[Sentence],
    dev: &[Sentence],
    grid: &HyperGrid,
    cfg: &TrainConfig,
    pretrained: Option<&Pretrained>,
) -> Result<Vec<GridResult>> {
    if grid.is_empty() {
        return Err(TrainError::Config("grid is empty".into()));
    }
    let mut results = run_points::<F>(&grid.points(), train, dev, cfg, pretrained)?;
    results.sort_by(|a, b| b.dev_f1.total_cmp(&a.dev_f1));
    Ok(results)
}

/// Ranked results as a text table.
pub fn format_ranked(results: &[GridResult]) -> String {
    let mut s = String::from("rank\tdev_f1\tsteps");
    for k in HyperParams::KEYS {
        s.push('\t');
        s.push_str(k);
    }
    s.push('\n');
    for (i, r) in results.iter().enumerate() {
        let _ = write!(s, "{}\t{:.2}\t{}", i + 1, 100.0 * r.dev_f1, r.steps);
        for (_, v) in r.hp.pairs() {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    s
}

pub struct Dataset {
    pub name: String,
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub pretrained: Option<Pretrained>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiGridRow {
    pub hp: HyperParams,
    /// Dev F1 per dataset, in dataset order.
    pub dev_f1: Vec<f64>,
    pub mean_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiGridResult {
    pub datasets: Vec<String>,
    /// Rows in grid order.
    pub rows: Vec<MultiGridRow>,
}

impl MultiGridResult {
    /// The single setting with the highest mean dev F1 ("Avg"); the first
    /// in grid order wins ties.
    pub fn avg_best(&self) -> &MultiGridRow {
        let mut best = &self.rows[0];
        for r in &self.rows[1..] {
            if r.mean_f1 > best.mean_f1 {
                best = r;
            }
        }
        best
    }

    /// The best setting for dataset `i` alone ("fully tuned").
    pub fn tuned_best(&self, i: usize) -> &MultiGridRow {
        let mut best = &self.rows[0];
        for r in &self.rows[1..] {
            if r.dev_f1[i] > best.dev_f1[i] {
                best = r;
            }
        }
        best
    }
}

/// Runs the grid on each dataset and tabulates dev F1 per point.
pub fn grid_search_datasets<F: Scalar>(datasets: &[Dataset], grid: &HyperGrid, cfg: &TrainConfig) -> Result<MultiGridResult> {
    if grid.is_empty() {
        return Err(TrainError::Config("grid is empty".into()));
    }
    if datasets.is_empty() {
        return Err(TrainError::Config("no datasets".into()));
    }
    let points = grid.points();
    let per_dataset: Vec<Vec<GridResult>> = datasets
        .iter()
        .map(|d| run_points::<F>(&points, &d.train, &d.dev, cfg, d.pretrained.as_ref()))
        .collect::<Result<_>>()?;
    let rows = points
        .into_iter()
        .enumerate()
        .map(|(i, hp)| {
            let dev_f1: Vec<f64> = per_dataset.iter().map(|r| r[i].dev_f1).collect();
            let mean_f1 = dev_f1.iter().sum::<f64>() / dev_f1.len() as f64;
            MultiGridRow { hp, dev_f1, mean_f1 }
        })
        .collect();
    Ok(MultiGridResult {
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        rows,
    })
}
