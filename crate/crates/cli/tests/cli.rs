use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mmctr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmctr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, epochs: usize) -> String {
    let path = dir.join("run.json");
    let text = format!(
        r#"{{
  "data": "data/train.csv",
  "eval_data": "data/test.csv",
  "checkpoint": "ckpt.json",
  "epochs": {epochs},
  "batch_size": 32,
  "optimizer": {{"learning_rate": 0.3}},
  "model": {{
    "manifolds": [
      {{"kind": "euclidean", "dim": 2}},
      {{"kind": "poincare_ball", "dim": 2, "curvature": 1.0}}
    ],
    "negatives_per_positive": 4,
    "init_scale": 0.01
  }}
}}"#
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn generate_small(dir: &Path) -> String {
    let data = dir.join("data");
    let out = mmctr(&["generate", "--depth", "3", "--branching", "2", "--users-per-leaf", "3", "--out", data.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data.to_str().unwrap().to_string()
}

#[test]
fn generate_writes_tree_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    let out = mmctr(&["generate", "--depth", "2", "--branching", "2", "--out", d.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let edges = fs::read_to_string(d.join("edges.csv")).unwrap();
    assert_eq!(edges.lines().count(), 6);
    let records = fs::read_to_string(d.join("interactions.csv")).unwrap();
    assert!(records.lines().count() > 0);
    let split: usize = ["train.csv", "test.csv"]
        .iter()
        .map(|f| fs::read_to_string(d.join(f)).unwrap().lines().count())
        .sum();
    assert_eq!(split, records.lines().count());
}

#[test]
fn train_eval_topk_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_small(dir.path());
    let config = write_config(dir.path(), 3);

    let out = mmctr(&["train", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("epoch=1 loss="), "{}", lines[0]);
    assert!(lines[2].contains(" auc="), "{}", lines[2]);

    let ckpt = dir.path().join("ckpt.json");
    let test = format!("{data}/test.csv");
    let out = mmctr(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", &test]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let line = stdout(&out);
    let fields: Vec<&str> = line.trim().split(' ').collect();
    assert_eq!(fields.len(), 2, "{line}");
    let auc: f64 = fields[0].strip_prefix("auc=").unwrap().parse().unwrap();
    let logloss: f64 = fields[1].strip_prefix("logloss=").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&auc) && logloss > 0.0);

    let out = mmctr(&["topk", "--checkpoint", ckpt.to_str().unwrap(), "--k", "3", "--user", "u0", "--user", "u2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows: Vec<Vec<String>> = stdout(&out)
        .lines()
        .map(|l| l.split('\t').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0][0], "u0");
    assert_eq!(rows[0][1], "1");
    assert_eq!(rows[5][0], "u2");
    assert_eq!(rows[5][1], "3");
    assert!(rows.iter().all(|r| r.len() == 4 && r[3].split('.').nth(1).map(str::len) == Some(6)));

    let all = mmctr(&["topk", "--checkpoint", ckpt.to_str().unwrap(), "--k", "1", "--threads", "2"]);
    assert_eq!(code(&all), 0, "{}", stderr(&all));
    assert_eq!(stdout(&all).lines().count(), 8 * 3);
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path());
    let config = write_config(dir.path(), 2);
    let mut bytes = Vec::new();
    for (name, threads) in [("a.json", "1"), ("b.json", "3")] {
        let out_path = dir.path().join(name);
        let out = mmctr(&["train", "--config", &config, "--out", out_path.to_str().unwrap(), "--threads", threads]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        bytes.push(fs::read(out_path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);

    let seeded = dir.path().join("c.json");
    let out = mmctr(&["train", "--config", &config, "--out", seeded.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(seeded).unwrap(), bytes[0]);
}

#[test]
fn selftest_passes() {
    let out = mmctr(&["selftest"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&mmctr(&["--help"])), 0);
    assert_eq!(code(&mmctr(&["--version"])), 0);

    let unknown = mmctr(&["frobnicate"]);
    assert_eq!(code(&unknown), 1);
    assert!(stderr(&unknown).contains("frobnicate"));
    assert_eq!(code(&mmctr(&[])), 1);
    assert_eq!(code(&mmctr(&["topk", "--checkpoint", "x.json", "--k", "0"])), 1);
    assert_eq!(code(&mmctr(&["train"])), 1);

    let missing = mmctr(&["eval", "--checkpoint", "/nonexistent/ckpt.json", "--data", "/nonexistent/d.csv"]);
    assert_eq!(code(&missing), 2);
    assert!(missing.stdout.is_empty());
    assert!(stderr(&missing).starts_with("error:"));
}

#[test]
fn bad_config_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 2);
    let text = fs::read_to_string(&config).unwrap().replace("\"batch_size\"", "\"batchsize\"");
    fs::write(&config, text).unwrap();
    let out = mmctr(&["train", "--config", &config]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("batchsize"), "{}", stderr(&out));

    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("\"batchsize\"", "\"batch_size\"")
        .replace("\"learning_rate\": 0.3", "\"learning_rate\": -1");
    fs::write(&config, text).unwrap();
    let out = mmctr(&["train", "--config", &config]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("learning_rate"), "{}", stderr(&out));
}

#[test]
fn unknown_topk_user_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path());
    let config = write_config(dir.path(), 1);
    assert_eq!(code(&mmctr(&["train", "--config", &config])), 0);
    let ckpt = dir.path().join("ckpt.json");
    let out = mmctr(&["topk", "--checkpoint", ckpt.to_str().unwrap(), "--user", "u1", "--user", "ghost"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("ghost") && stderr(&out).contains('1'));
}
