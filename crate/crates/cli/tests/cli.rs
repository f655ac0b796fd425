use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn oforest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oforest"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(o: &Output, key: &str) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {key} in:\n{}", stdout(o)))
}

fn num(o: &Output, key: &str) -> f64 {
    field(o, key).parse().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn synthetic(function: &str, d: usize, grid: [usize; 2], n: usize) -> Value {
    json!({"synthetic": {"function": function, "d": d, "grid": grid, "n": n, "seed": 1}})
}

fn train(dir: &Path, data: Value, extra: Value) -> (Output, PathBuf) {
    let model = dir.join("model.json");
    let mut cfg = json!({"data": data, "out": model});
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let c = write_config(dir, "train.json", &cfg);
    (oforest(&["train", "--config", c.to_str().unwrap()]), model)
}

#[test]
fn linear_data_trains_single_leaf_trees() {
    let dir = TempDir::new().unwrap();
    let (out, model) = train(
        dir.path(),
        synthetic("linear", 4, [2, 2], 5000),
        json!({"forest": {"t_count": 2}}),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(field(&out, "tree0.leaves"), "1");
    assert_eq!(field(&out, "tree1.leaves"), "1");
    assert_eq!(field(&out, "epsilon_attained"), "true");
    assert!(model.exists());
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = synthetic("sin-product", 4, [2, 2], 2000);
    let extra = json!({"build": {"epsilon": 0.05}, "forest": {"t_count": 3, "mode": "retrained"}});
    let (a, model) = train(dir.path(), data.clone(), extra.clone());
    assert!(a.status.success());
    let first = std::fs::read(&model).unwrap();
    let (b, _) = train(dir.path(), data, extra);
    assert!(b.status.success());
    assert_eq!(std::fs::read(&model).unwrap(), first);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn large_epsilon_gives_single_leaves() {
    let dir = TempDir::new().unwrap();
    let (out, _) = train(
        dir.path(),
        synthetic("abs-ridge", 1, [1, 1], 300),
        json!({"build": {"epsilon": 10.0}}),
    );
    assert!(out.status.success());
    assert_eq!(field(&out, "tree0.leaves"), "1");
    assert_eq!(field(&out, "epsilon_attained"), "true");
}

#[test]
fn eval_reports_errors_and_weights() {
    let dir = TempDir::new().unwrap();
    let data = synthetic("abs-ridge", 4, [2, 2], 3000);
    let (t, model) = train(
        dir.path(),
        data.clone(),
        json!({"build": {"epsilon": 0.02}}),
    );
    assert!(t.status.success());
    let c = write_config(
        dir.path(),
        "eval.json",
        &json!({"data": data, "model": model}),
    );
    let a = oforest(&["eval", "--config", c.to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(num(&a, "hard_rms") <= 0.02);
    assert!(num(&a, "helper_active_fraction") < 0.01);
    assert!(num(&a, "max_abs_error") >= num(&a, "rms"));
    let b = oforest(&["eval", "--config", c.to_str().unwrap()]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn eval_rejects_mismatched_dimensions() {
    let dir = TempDir::new().unwrap();
    let (t, model) = train(dir.path(), synthetic("linear", 4, [2, 2], 200), json!({}));
    assert!(t.status.success());
    let c = write_config(
        dir.path(),
        "eval.json",
        &json!({"data": synthetic("linear", 9, [3, 3], 50), "model": model}),
    );
    assert_eq!(
        oforest(&["eval", "--config", c.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn csv_round_trip_through_train_and_eval() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("data.csv");
    let mut text = String::from("x0,x1,y\n");
    for i in 0..400 {
        let (a, b) = ((i % 20) as f64 / 19.0, (i / 20) as f64 / 19.0);
        text += &format!("{a},{b},{}\n", 2.0 * a - b);
    }
    std::fs::write(&csv, text).unwrap();
    let data = json!({"csv": {"path": csv, "grid": [1, 2], "w": 1.0}});
    let (t, model) = train(
        dir.path(),
        data.clone(),
        json!({"build": {"epsilon": 1e-6}}),
    );
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    assert_eq!(field(&t, "tree0.leaves"), "1");
    let c = write_config(
        dir.path(),
        "eval.json",
        &json!({"data": data, "model": model}),
    );
    let e = oforest(&["eval", "--config", c.to_str().unwrap()]);
    assert!(num(&e, "rms") < 1e-9);
}

#[test]
fn distort_writes_a_permuted_forest() {
    let dir = TempDir::new().unwrap();
    let (t, model) = train(
        dir.path(),
        synthetic("sin-product", 4, [2, 2], 1000),
        json!({}),
    );
    assert!(t.status.success());
    let moved = dir.path().join("moved.json");
    let back = dir.path().join("back.json");
    let m = model.to_str().unwrap();
    let a = oforest(&[
        "distort",
        "--model",
        m,
        "--transform",
        "rot90",
        "--out",
        moved.to_str().unwrap(),
    ]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(field(&a, "map"), "2 0 3 1");
    let b = oforest(&[
        "distort",
        "--model",
        moved.to_str().unwrap(),
        "--transform",
        "rot270",
        "--out",
        back.to_str().unwrap(),
    ]);
    assert!(b.status.success());
    assert_eq!(
        std::fs::read(&back).unwrap(),
        std::fs::read(&model).unwrap()
    );
}

#[test]
fn distort_rejects_unsupported_transforms() {
    let dir = TempDir::new().unwrap();
    let (_, model) = train(dir.path(), synthetic("linear", 6, [2, 3], 200), json!({}));
    let out = dir.path().join("moved.json");
    for tag in ["rot90", "zoom:2"] {
        let r = oforest(&[
            "distort",
            "--model",
            model.to_str().unwrap(),
            "--transform",
            tag,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(r.status.code(), Some(1), "{tag}");
        assert!(!out.exists());
    }
}

#[test]
fn probe_reports_smooth_forest_and_jumpy_tree() {
    let dir = TempDir::new().unwrap();
    let data = synthetic("sin-product", 4, [2, 2], 5000);
    let (t, model) = train(
        dir.path(),
        data,
        json!({"build": {"epsilon": 0.02}, "forest": {"t_count": 3, "delta": 0.03}}),
    );
    assert!(t.status.success());
    let m = model.to_str().unwrap();
    let p = oforest(&["probe", "--model", m]);
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    assert!(num(&p, "max_jump") <= 1e-6);

    let (_, single) = train(
        dir.path(),
        synthetic("sin-product", 4, [2, 2], 5000),
        json!({"build": {"epsilon": 0.02}, "forest": {"t_count": 1}}),
    );
    let c = write_config(
        dir.path(),
        "probe.json",
        &json!({"model": single, "probe": {"mode": "hard"}}),
    );
    let h = oforest(&["probe", "--config", c.to_str().unwrap()]);
    assert!(h.status.success());
    assert!(num(&h, "max_jump") > 0.0);
}

#[test]
fn probe_without_crossings_succeeds() {
    let dir = TempDir::new().unwrap();
    let (_, model) = train(dir.path(), synthetic("linear", 2, [1, 2], 300), json!({}));
    let c = write_config(
        dir.path(),
        "probe.json",
        &json!({"model": model, "probe": {"max_segments": 10}}),
    );
    let p = oforest(&["probe", "--config", c.to_str().unwrap()]);
    assert!(p.status.success());
    assert_eq!(field(&p, "status"), "no crossings sampled");
}

#[test]
fn bench_reports_latencies_and_handles_empty_input() {
    let dir = TempDir::new().unwrap();
    let (_, model) = train(
        dir.path(),
        synthetic("quadratic-bowl", 4, [2, 2], 2000),
        json!({}),
    );
    let report = dir.path().join("bench.json");
    let c = write_config(
        dir.path(),
        "bench.json.cfg",
        &json!({"model": model, "bench": {"inputs": 300, "repeats": 3}, "report": report}),
    );
    let b = oforest(&["bench", "--config", c.to_str().unwrap()]);
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(field(&b, "evaluations"), "300");
    assert!(num(&b, "ratio") > 0.0);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["evaluations"], 300);

    let c = write_config(
        dir.path(),
        "empty.cfg",
        &json!({"model": model, "bench": {"inputs": 0}}),
    );
    let e = oforest(&["bench", "--config", c.to_str().unwrap()]);
    assert!(e.status.success());
    assert_eq!(field(&e, "evaluations"), "0");
}

#[test]
fn invalid_config_fails_before_writing() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("model.json");
    for cfg in [
        json!({"data": synthetic("linear", 4, [2, 2], 100), "out": model, "build": {"tau": 1.5}}),
        json!({"data": synthetic("linear", 4, [2, 2], 100), "out": model, "forest": {"t_count": 0}}),
        json!({"data": synthetic("linear", 4, [2, 2], 100), "out": model, "forest": {"mu": 0.0}}),
        json!({"data": synthetic("spiral", 4, [2, 2], 100), "out": model}),
        json!({"data": synthetic("linear", 4, [3, 3], 100), "out": model}),
        json!({"data": synthetic("linear", 4, [2, 2], 100), "out": model, "bogus": 1}),
        json!({"data": synthetic("linear", 4, [2, 2], 100)}),
    ] {
        let c = write_config(dir.path(), "bad.json", &cfg);
        let r = oforest(&["train", "--config", c.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(1), "{cfg}");
        assert!(!model.exists(), "{cfg}");
    }
    let c = write_config(dir.path(), "bad.json", &json!({}));
    assert_eq!(
        oforest(&["train", "--config", c.to_str().unwrap(), "--threads", "0"])
            .status
            .code(),
        Some(1)
    );
    std::fs::write(dir.path().join("broken.json"), "{not json").unwrap();
    let r = oforest(&[
        "train",
        "--config",
        dir.path().join("broken.json").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn io_failures_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(
        oforest(&["train", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        oforest(&["probe", "--model", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let data = json!({"csv": {"path": dir.path().join("absent.csv")}});
    let c = write_config(
        dir.path(),
        "cfg.json",
        &json!({"data": data, "out": dir.path().join("m.json")}),
    );
    assert_eq!(
        oforest(&["train", "--config", c.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let (_, model) = train(dir.path(), synthetic("linear", 2, [1, 2], 100), json!({}));
    let unwritable = dir.path().join("no/such/dir/out.json");
    let r = oforest(&[
        "distort",
        "--model",
        model.to_str().unwrap(),
        "--transform",
        "identity",
        "--out",
        unwritable.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn seed_and_threads_flags_are_accepted() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("model.json");
    let cfg = json!({"data": synthetic("abs-ridge", 4, [2, 2], 1000), "forest": {"t_count": 2, "mode": "retrained"}});
    let c = write_config(dir.path(), "cfg.json", &cfg);
    let run = |seed: &str, threads: &str| {
        let r = oforest(&[
            "train",
            "--config",
            c.to_str().unwrap(),
            "--seed",
            seed,
            "--threads",
            threads,
            "--out",
            model.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        std::fs::read(&model).unwrap()
    };
    let a = run("7", "1");
    assert_eq!(run("7", "4"), a);
    assert_ne!(run("8", "2"), a);
}
