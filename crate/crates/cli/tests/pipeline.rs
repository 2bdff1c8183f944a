use std::path::Path;
use std::process::{Command, Output};

use pdon::datagen::load_dataset;
use pdon::forward::evaluate;
use pdon::models::load_model;

fn pdon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdon"))
        .args(args)
        .env_remove("PDON_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pdon(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small LD network so pipeline tests stay fast.
const TINY: &str = r#"
arch = "parametric-ld"

[network]
arch = "parametric-ld"
resolution = 200
channels = 1
param_dim = 2
dt = 0.01
branch_dims = [200, 12, 8]
param_dims = [2, 12, 8]
trunk_dims = [6, 12, 8]
decoder_dims = []
mlp_dims = []
pe_order = 3

[train]
epochs = 4
batch_size = 4
eval_every = 2

[init]
epochs = 20
restarts = 3
learning_rate = 0.01

[refine]
epochs = 5
batch_size = 8
"#;

fn files_equal(a: &Path, b: &Path) {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn gen_data_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    ok(&["gen-data", "--case", "1a", "--role", "train", "--n", "6", "--seed", "7", "--out", s(&d)]);
    let ds = load_dataset(&d).unwrap();
    assert_eq!((ds.len(), ds.meta.seed, ds.resolution()), (6, 7, 200));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = pdon(&["gen-data", "--case", "1a", "--role", "train", "--n", "2", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let out = pdon(&["gen-data", "--case", "7z", "--role", "train", "--n", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let missing = dir.path().join("nope");
    let out = pdon(&["eval-forward", "--model", s(&missing), "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    let out = pdon(&["gen-data", "--case", "1a", "--role", "train", "--n", "2", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline_is_consistent_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let cfg = p("run.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let c = s(&cfg);

    ok(&["gen-data", "--case", "1a", "--role", "train", "--n", "8", "--seed", "1", "--out", s(&p("train"))]);
    ok(&["gen-data", "--case", "1a", "--role", "test", "--n", "5", "--seed", "2", "--out", s(&p("test"))]);
    ok(&["gen-data", "--case", "1a", "--role", "test", "--n", "5", "--seed", "2", "--out", s(&p("test2"))]);
    files_equal(&p("test"), &p("test2"));

    for m in ["model", "model2"] {
        ok(&["train-forward", "--config", c, "--train", s(&p("train")), "--test", s(&p("test")), "--seed", "3", "--out", s(&p(m))]);
    }
    files_equal(&p("model"), &p("model2"));
    let history = std::fs::read_to_string(p("model").join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_loss,test_nrmse"));
    assert_eq!(history.lines().count(), 1 + 4);

    ok(&["eval-forward", "--model", s(&p("model")), "--data", s(&p("test")), "--out", s(&p("eval"))]);
    let summary = std::fs::read_to_string(p("eval").join("eval_summary.csv")).unwrap();
    let fields: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let (model, _) = load_model(&p("model")).unwrap();
    let e = evaluate(&model, &load_dataset(&p("test")).unwrap()).unwrap();
    assert_eq!(fields[0], "parametric-ld");
    assert!((fields[2].parse::<f64>().unwrap() - e.aggregate).abs() < 1e-12);
    assert!((fields[3].parse::<f64>().unwrap() - e.mean_per_sample).abs() < 1e-12);

    let model_dir = p("model");
    let m = s(&model_dir);
    ok(&["invert-init", "--config", c, "--model", m, "--data", s(&p("train")), "--out", s(&p("init_train"))]);
    ok(&["train-refine", "--config", c, "--model", m, "--data", s(&p("train")), "--init", s(&p("init_train").join("init.csv")), "--out", s(&p("refine"))]);
    for out in ["est", "est2"] {
        ok(&["estimate", "--config", c, "--model", m, "--refine", s(&p("refine")), "--data", s(&p("test")), "--out", s(&p(out))]);
    }
    files_equal(&p("est"), &p("est2"));
    let est = std::fs::read_to_string(p("est").join("estimates.csv")).unwrap();
    assert_eq!(est.lines().count(), 1 + 5);
    assert!(est.starts_with("sample_id,true_mu1,true_mu2,"));

    ok(&["superres", "--model", m, "--data", s(&p("test")), "--factors", "1,2", "--out", s(&p("sr"))]);
    let sr = std::fs::read_to_string(p("sr").join("superres.csv")).unwrap();
    let f1: f64 = sr.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((f1 - e.aggregate).abs() < 1e-12);

    ok(&["latent-pca", "--model", m, "--grid-n", "4", "--out", s(&p("pca"))]);
    let scores = std::fs::read_to_string(p("pca").join("pca_scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 16);
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pdon"))
        .args(["gen-data", "--case", "1b", "--role", "train", "--n", "2"])
        .env("PDON_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("gen-data").join("manifest.json").exists());
}
