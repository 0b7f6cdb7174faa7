use std::fmt;

use crate::model::Variant;
use crate::numerics::Scalar;
use crate::training::{grid_search_datasets, Dataset, EmbeddingMode, HyperGrid, TrainConfig, TrainError};

/// One design decision to remove before re-tuning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    /// Removes nothing; its row must show zero deltas.
    Nothing,
    NoRecurrentDropout,
    Parallel,
    NoPretrained,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::NoRecurrentDropout, Ablation::Parallel, Ablation::NoPretrained];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Nothing => "-nothing",
            Ablation::NoRecurrentDropout => "-LSTM dropout",
            Ablation::Parallel => "-stacked bi-LSTM",
            Ablation::NoPretrained => "-pretrain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nothing" => Some(Ablation::Nothing),
            "recurrent-dropout" => Some(Ablation::NoRecurrentDropout),
            "stacked" => Some(Ablation::Parallel),
            "pretrained" => Some(Ablation::NoPretrained),
            _ => None,
        }
    }

    /// The grid and config with this decision removed.
    pub fn apply(self, grid: &HyperGrid, cfg: &TrainConfig) -> (HyperGrid, TrainConfig) {
        let (mut grid, mut cfg) = (grid.clone(), cfg.clone());
        match self {
            Ablation::Nothing => {}
            Ablation::NoRecurrentDropout => grid.recurrent_dropout = vec![0.0],
            Ablation::Parallel => cfg.variant = Variant::Parallel,
            Ablation::NoPretrained => cfg.embedding_mode = EmbeddingMode::Random,
        }
        (grid, cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub label: String,
    /// Best dev F1 per dataset after re-tuning.
    pub dev_f1: Vec<f64>,
    /// `dev_f1 - base dev_f1` per dataset; negative means the ablation hurt.
    pub delta: Vec<f64>,
}

impl AblationRow {
    pub fn mean_f1(&self) -> f64 {
        mean(&self.dev_f1)
    }

    pub fn mean_delta(&self) -> f64 {
        mean(&self.delta)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// The base row followed by one row per ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub datasets: Vec<String>,
    pub base: AblationRow,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Builds rows from per-dataset best F1s; deltas are taken against `base`.
    pub fn from_scores(datasets: Vec<String>, base: Vec<f64>, ablated: Vec<(String, Vec<f64>)>) -> Self {
        let rows = ablated
            .into_iter()
            .map(|(label, f)| AblationRow {
                delta: f.iter().zip(&base).map(|(a, b)| a - b).collect(),
                label,
                dev_f1: f,
            })
            .collect();
        AblationTable {
            datasets,
            base: AblationRow {
                label: "This work".into(),
                delta: vec![0.0; base.len()],
                dev_f1: base,
            },
            rows,
        }
    }
}

impl fmt::Display for AblationTable {
    /// F1 in percent for the base row and signed percentage-point deltas
    /// for the others.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<18}", "")?;
        for d in &self.datasets {
            write!(f, "\t{d}")?;
        }
        writeln!(f, "\tAverage")?;
        write!(f, "{:<18}", self.base.label)?;
        for x in &self.base.dev_f1 {
            write!(f, "\t{:.1}", 100.0 * x)?;
        }
        writeln!(f, "\t{:.1}", 100.0 * self.base.mean_f1())?;
        for r in &self.rows {
            write!(f, "{:<18}", r.label)?;
            for x in &r.delta {
                write!(f, "\t{:+.1}", 100.0 * x)?;
            }
            writeln!(f, "\t{:+.1}", 100.0 * r.mean_delta())?;
        }
        Ok(())
    }
}

fn best_per_dataset<F: Scalar>(datasets: &[Dataset], grid: &HyperGrid, cfg: &TrainConfig) -> Result<Vec<f64>, TrainError> {
    let m = grid_search_datasets::<F>(datasets, grid, cfg)?;
    Ok((0..datasets.len()).map(|i| m.tuned_best(i).dev_f1[i]).collect())
}

/// Tunes the base system on every dataset, then re-tunes with each
/// decision removed and reports best dev F1 differences.
pub fn ablation_run<F: Scalar>(
    datasets: &[Dataset],
    grid: &HyperGrid,
    cfg: &TrainConfig,
    ablations: &[Ablation],
) -> Result<AblationTable, TrainError> {
    let base = best_per_dataset::<F>(datasets, grid, cfg)?;
    let mut ablated = Vec::new();
    for &a in ablations {
        let (g, c) = a.apply(grid, cfg);
        let scores = if a == Ablation::Nothing {
            base.clone()
        } else {
            best_per_dataset::<F>(datasets, &g, &c)?
        };
        ablated.push((a.label().to_owned(), scores));
    }
    Ok(AblationTable::from_scores(
        datasets.iter().map(|d| d.name.clone()).collect(),
        base,
        ablated,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deltas_are_signed_against_base() {
        let t = AblationTable::from_scores(
            vec!["A".into(), "B".into()],
            vec![0.95, 0.90],
            vec![("-LSTM dropout".into(), vec![0.94, 0.91]), ("-nothing".into(), vec![0.95, 0.90])],
        );
        assert!((t.rows[0].delta[0] + 0.01).abs() < 1e-12);
        assert!(t.rows[0].delta[1] > 0.0);
        assert_eq!(t.rows[1].delta, vec![0.0, 0.0]);
        let text = t.to_string();
        assert!(text.contains("This work         \t95.0\t90.0\t92.5"), "{text}");
        assert!(text.contains("-LSTM dropout     \t-1.0\t+1.0\t+0.0"), "{text}");
    }

    #[test]
    fn apply_removes_one_decision() {
        let cfg = TrainConfig {
            embedding_mode: EmbeddingMode::PretrainedFinetune,
            ..Default::default()
        };
        let g = HyperGrid::full();
        assert_eq!(Ablation::NoRecurrentDropout.apply(&g, &cfg).0.recurrent_dropout, vec![0.0]);
        assert_eq!(Ablation::Parallel.apply(&g, &cfg).1.variant, Variant::Parallel);
        assert_eq!(Ablation::NoPretrained.apply(&g, &cfg).1.embedding_mode, EmbeddingMode::Random);
        assert_eq!(Ablation::Nothing.apply(&g, &cfg), (g, cfg));
    }
}
