use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn snmpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snmpp"))
        .args(["--threads", "1"])
        .args(args)
        .output()
        .expect("spawn snmpp")
}

fn ok(args: &[&str]) -> Value {
    let out = snmpp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(stdout.lines().last().expect("summary line")).unwrap()
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().expect("error line")).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        let v = ok(&["simulate", "pp1", "--out", p(out), "--n-train", "6", "--n-val", "2", "--seed", seed]);
        assert_eq!(v["generator"], "pp1");
    }
    let read = |d: &Path| std::fs::read_to_string(d.join("train.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["K"], 2);
    assert_eq!(read(&a).lines().count(), 6);
}

#[test]
fn homogeneous_and_supply_chain_generators() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h");
    ok(&["simulate", "homogeneous", "--out", p(&h), "--n-train", "3", "--n-val", "1", "--rates", "0.5,1.0", "--horizon", "10"]);
    let first = std::fs::read_to_string(h.join("train.jsonl")).unwrap();
    let seq: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(seq["T"], 10.0);
    let s = dir.path().join("s");
    let v = ok(&["simulate", "supply-chain", "--out", p(&s), "--n-train", "2", "--n-val", "1"]);
    assert_eq!(v["generator"], "supply-chain");
}

#[test]
fn unknown_generator_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = snmpp(&["simulate", "pp3", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"]["kind"], "usage");
}

#[test]
fn missing_data_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = snmpp(&["train", "--data", p(&dir.path().join("nope")), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let e = error_line(&out);
    assert_eq!(e["error"]["kind"], "runtime");
    assert!(e["error"]["message"].as_str().unwrap().contains("nope"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"simulate": {"n-trian": 3}}"#).unwrap();
    let out = snmpp(&["--config", p(&cfg), "simulate", "pp1", "--out", p(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out)["error"]["message"].as_str().unwrap().contains("n-trian"));
}

#[test]
fn train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("model.json");
    let log = dir.path().join("log.jsonl");
    ok(&["simulate", "pp1", "--out", p(&data), "--n-train", "8", "--n-val", "4", "--seed", "2"]);

    let out = snmpp(&[
        "train", "--data", p(&data), "--out", p(&ckpt), "--log", p(&log), "--epochs", "2", "--batch-size", "4", "--lr", "0.01",
        "--cosine-final", "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for (i, rec) in lines[..2].iter().enumerate() {
        assert_eq!(rec["epoch"], i + 1);
        for key in ["train-nll", "val-nll", "wall-seconds"] {
            assert!(rec[key].as_f64().unwrap().is_finite(), "{key}");
        }
    }
    assert_eq!(lines[2]["command"], "train");
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 2);

    let preds = dir.path().join("pred.csv");
    let v = ok(&[
        "eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--predictions", p(&preds), "--compare-constant", "--bootstrap", "50",
    ]);
    assert!(v["time_rmse"].as_f64().unwrap() > 0.0);
    let rate = v["type_error_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert_eq!(v["recovered"]["delays"].as_array().unwrap().len(), 2);
    assert_eq!(v["recovered"]["psi"][0].as_array().unwrap().len(), 2);
    let ci = &v["constant-baseline"]["nll-gain-ci"];
    assert!(ci["lower"].as_f64().unwrap() <= ci["upper"].as_f64().unwrap());
    let n = v["n_events"].as_u64().unwrap() as usize;
    assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), n + 1);

    let kernels = dir.path().join("k.csv");
    let v = ok(&["export", "kernels", "--checkpoint", p(&ckpt), "--out", p(&kernels), "--points", "50"]);
    assert_eq!(v["curves"], 4);
    let text = std::fs::read_to_string(&kernels).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 50);

    let curve = dir.path().join("i.csv");
    let v = ok(&[
        "export", "intensity", "--checkpoint", p(&ckpt), "--sequence", p(&data.join("val.jsonl")), "--out", p(&curve), "--points", "20",
    ]);
    assert_eq!(v["types"], 2);
    let text = std::fs::read_to_string(&curve).unwrap();
    assert!(text.lines().count() > 1);

    let bad = snmpp(&["export", "intensity", "--checkpoint", p(&ckpt), "--sequence", p(&data.join("val.jsonl")), "--index", "99", "--out", p(&curve)]);
    assert_eq!(bad.status.code(), Some(1));
}
