use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cws"))
        .args(args)
        .env("SEG_LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CORPUS: &str = "中国 人民 很 好\n我们 是 中国 人\n人民 很 好\n我们 好\n中国 是 我们 的\n他们 是 人民\n";

const SUBCOMMANDS: [(&str, &[&str]); 9] = [
    ("train", &["--train", "--dev", "--config", "--out", "--log", "--seed", "--workers", "--set", "--strict"]),
    ("segment", &["--model", "--input", "--output"]),
    ("eval", &["--gold", "--pred", "--train", "--format"]),
    ("grid", &["--grid", "--train", "--dev", "--output", "--seed"]),
    ("significance", &["--gold", "--pred-a", "--pred-b", "--resamples", "--seed"]),
    ("inconsistency", &["--corpus", "--audit"]),
    ("stats", &["--corpus"]),
    ("import-embeddings", &["--model", "--char-vectors", "--bigram-vectors", "--out"]),
    ("oov", &["--train", "--test", "--pred"]),
];

#[test]
fn help_lists_every_flag() {
    for (cmd, flags) in SUBCOMMANDS {
        let o = cws(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}");
        let text = stdout(&o);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(cws(&["stats", "--bogus"]).status.code(), Some(1));
    assert_eq!(cws(&["nonsense"]).status.code(), Some(1));
    assert_eq!(cws(&[]).status.code(), Some(1));
}

#[test]
fn eval_identity_prints_100() {
    let d = tempfile::tempdir().unwrap();
    let g = write(d.path(), "g.txt", CORPUS);
    let o = cws(&["eval", "--gold", s(&g), "--pred", s(&g)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("f1=100.00\n"));
    let o = cws(&["eval", "--gold", s(&g), "--pred", s(&g), "--train", s(&g), "--format", "json"]);
    assert!(stdout(&o).contains("\"f1\": 1.0"));
}

#[test]
fn eval_misaligned_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    let g = write(d.path(), "g.txt", "ab c\n");
    let p = write(d.path(), "p.txt", "ab d\n");
    let o = cws(&["eval", "--gold", s(&g), "--pred", s(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sentence 0"));
}

#[test]
fn significance_identical_prints_p_one() {
    let d = tempfile::tempdir().unwrap();
    let g = write(d.path(), "g.txt", CORPUS);
    let o = cws(&["significance", "--gold", s(&g), "--pred-a", s(&g), "--pred-b", s(&g)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("p_value=1.000\n"));
}

#[test]
fn malformed_corpus_exits_2_with_line() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "bad.txt", "a b\nc  d\n");
    let o = cws(&["stats", "--corpus", s(&p), "--strict"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.txt:2:"), "{}", stderr(&o));
    let p = d.path().join("bin.txt");
    std::fs::write(&p, b"ok\n\xff\xfe\n").unwrap();
    let o = cws(&["stats", "--corpus", s(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bin.txt:2:"));
    let o = cws(&["stats", "--corpus", s(&d.path().join("missing.txt"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_and_inconsistency() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.txt", "ab\nab\nab\na b\n");
    let o = cws(&["stats", "--corpus", s(&c)]);
    assert_eq!(stdout(&o), "sentences=4\ntokens=5\ncharacters=8\nword_types=3\n");
    let audit = d.path().join("audit.txt");
    let o = cws(&["inconsistency", "--corpus", s(&c), "--audit", s(&audit)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).ends_with("tokens=5 minority=1 inconsistency=20.00%\n"));
    assert!(std::fs::read_to_string(&audit).unwrap().contains("ab\ta b\t4\t1\n"));
}

fn train(dir: &Path, tag: &str) -> (Vec<u8>, String, String) {
    let t = write(dir, "train.txt", CORPUS);
    let cfg = write(
        dir,
        "cfg.txt",
        "# tiny\nhidden = 8\nchar_dim = 6\nbigram_dim = 4\nmax_epochs = 4\nbatch_size = 2\neval_every = 3\n",
    );
    let out = dir.join(format!("{tag}.ckpt"));
    let log = dir.join(format!("{tag}.log"));
    let o = cws(&[
        "train", "--train", s(&t), "--dev", s(&t), "--config", s(&cfg), "--out", s(&out), "--log", s(&log),
        "--seed", "7",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let raw = write(dir, "raw.txt", "中国人民很好\n\n我们是人\n");
    let seg = dir.join(format!("{tag}.seg"));
    let o = cws(&["segment", "--model", s(&out), "--input", s(&raw), "--output", s(&seg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    (
        std::fs::read(&out).unwrap(),
        std::fs::read_to_string(&log).unwrap(),
        std::fs::read_to_string(&seg).unwrap(),
    )
}

#[test]
fn train_and_segment_are_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let a = train(d.path(), "a");
    let b = train(d.path(), "b");
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    let lines: Vec<&str> = a.2.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "");
    assert_eq!(lines[0].replace(' ', ""), "中国人民很好");
    assert!(a.1.lines().next().unwrap().starts_with("step=0 epoch=1"));
}

#[test]
fn bad_config_key_is_a_data_error_with_line() {
    let d = tempfile::tempdir().unwrap();
    let t = write(d.path(), "train.txt", CORPUS);
    let cfg = write(d.path(), "cfg.txt", "hidden=8\nwat=1\n");
    let o = cws(&["train", "--train", s(&t), "--config", s(&cfg), "--out", s(&d.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfg.txt:2: unknown key \"wat\""), "{}", stderr(&o));
}

#[test]
fn import_embeddings_reports_coverage() {
    let d = tempfile::tempdir().unwrap();
    let (ckpt, _, _) = train(d.path(), "m");
    let model = write(d.path(), "in.ckpt", "");
    std::fs::write(&model, ckpt).unwrap();
    let vecs = write(d.path(), "v.txt", "2 6\n中 1 2 3 4 5 6\n猫 1 1 1 1 1 1\n");
    let out = d.path().join("out.ckpt");
    let o = cws(&["import-embeddings", "--model", s(&model), "--char-vectors", s(&vecs), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("char matched=1 missing="));
    assert!(stdout(&o).contains("extraneous=1"));
    let bad = write(d.path(), "bad.txt", "1 5\n中 1 2 3 4 5\n");
    let o = cws(&["import-embeddings", "--model", s(&model), "--char-vectors", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.txt:1:"));
}

#[test]
fn corrupted_checkpoint_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    let m = write(d.path(), "m.ckpt", "not a checkpoint");
    let raw = write(d.path(), "raw.txt", "中国\n");
    let o = cws(&["segment", "--model", s(&m), "--input", s(&raw)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("supported version"));
}

#[test]
fn grid_ranks_every_point() {
    let d = tempfile::tempdir().unwrap();
    let t = write(d.path(), "train.txt", CORPUS);
    let g = write(
        d.path(),
        "grid.txt",
        "hidden=6\nchar_dim=4\nbigram_dim=4\nmax_epochs=2\nbatch_size=3\nlr0=0.04,0.03\ninput_dropout=0.15,0.3\n",
    );
    let o = cws(&["grid", "--grid", s(&g), "--train", s(&t), "--dev", s(&t)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("rank\tdev_f1\tsteps\tchar_dim"));
}

#[test]
fn oov_inventory_flags_known_parts() {
    let d = tempfile::tempdir().unwrap();
    let t = write(d.path(), "t.txt", "抽象 概念\n");
    let g = write(d.path(), "g.txt", "抽象概念\n");
    let p = write(d.path(), "p.txt", "抽象 概念\n");
    let o = cws(&["oov", "--train", s(&t), "--test", s(&g), "--pred", s(&p)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("抽象概念\t1\t0\t1\t抽象 概念:1\n"));
}
