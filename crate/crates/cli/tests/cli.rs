use std::path::Path;
use std::process::{Command, Output};

use wlk::supervision::disk_mask;
use wlk::{io, Dataset, Split};

const SMALL: &[&str] = &[
    "--set",
    "synth.n_positive=10",
    "--set",
    "synth.n_negative=10",
    "--set",
    "model.base_channels=4",
    "--set",
    "train.epochs=1",
];

fn wlk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wlk")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_small(dir: &Path) {
    let mut args = vec!["synth", "--out", path(dir)];
    args.extend_from_slice(SMALL);
    let out = wlk(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&wlk(&["synth", "--seed", "7", "--out", path(d), "--set", "synth.n_positive=5", "--set", "synth.n_negative=5"])), 0);
    }
    for name in ["manifest.json", "config.resolved.json", "images/img_0000.pgm", "images/img_0009.pgm"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_epochs_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth_small(tmp.path());
    let out = wlk(&["train", "--data", path(tmp.path()), "--out", path(&tmp.path().join("r")), "--epochs", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    assert_eq!(code(&wlk(&["train", "--data", path(&missing), "--out", path(tmp.path())])), 3);
    assert_eq!(code(&wlk(&["train", "--bogus"])), 2);
    assert_eq!(code(&wlk(&["synth", "--out", path(tmp.path()), "--set", "no.such.key=1"])), 2);

    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(code(&wlk(&["synth", "--out", path(tmp.path()), "--config", path(&cfg)])), 2);

    // a manifest pointing at an image that is not there
    let data = tmp.path().join("d");
    synth_small(&data);
    std::fs::remove_file(data.join("images/img_0000.pgm")).unwrap();
    assert_eq!(code(&wlk(&["train", "--data", path(&data), "--out", path(&tmp.path().join("r"))])), 3);
}

#[test]
fn nan_training_is_a_numeric_failure() {
    let tmp = tempfile::tempdir().unwrap();
    synth_small(tmp.path());
    let run = tmp.path().join("r");
    let mut args = vec!["train", "--data", path(tmp.path()), "--out", path(&run)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--set", "train.optimizer.lr=1e300"]);
    let out = wlk(&args);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_lists_every_key_with_default() {
    for sub in ["synth", "train", "eval", "ablate"] {
        let out = wlk(&[sub, "--help"]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8_lossy(&out.stdout);
        for (key, value) in wlk_cli::RunConfig::default().to_flat() {
            let line = text.lines().find(|l| l.split_whitespace().next() == Some(key.as_str()));
            let line = line.unwrap_or_else(|| panic!("{sub} --help lacks {key}"));
            assert!(line.contains(&value.to_string()), "{line}");
        }
    }
}

#[test]
fn pipeline_writes_expected_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data);
    let t = tmp.path();
    let with_small = |mut args: Vec<&str>| {
        args.extend_from_slice(SMALL);
        let out = wlk(&args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    let (run, pred, ev, bounds) = (t.join("run"), t.join("pred"), t.join("eval"), t.join("bounds"));
    with_small(vec!["train", "--data", path(&data), "--out", path(&run)]);
    with_small(vec!["infer", "--data", path(&data), "--checkpoint", path(&run.join("model.wlkw")), "--out", path(&pred)]);
    with_small(vec!["eval", "--data", path(&data), "--predictions", path(&pred), "--out", path(&ev), "--svg"]);
    with_small(vec!["bounds", "--data", path(&data), "--out", path(&bounds), "--split", "val"]);

    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_auroc\n"));
    assert_eq!(log.lines().count(), 3);
    for name in ["roc.csv", "froc.csv", "summary.json", "roc.svg", "froc.svg", "config.resolved.json"] {
        assert!(ev.join(name).is_file(), "{name}");
    }
    let roc = std::fs::read_to_string(ev.join("roc.csv")).unwrap();
    assert!(roc.starts_with("threshold,fpr,tpr\n"));
    let froc = std::fs::read_to_string(ev.join("froc.csv")).unwrap();
    assert!(froc.starts_with("threshold,fp_per_image,recall\n"));

    let ds = Dataset::load(&data.join("manifest.json")).unwrap();
    let test_count = ds.split(Split::Test).count();
    let wlk_files = std::fs::read_dir(&pred).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wlk")).count();
    assert_eq!(wlk_files, test_count);

    let val: Vec<_> = ds.split(Split::Val).collect();
    let stem = val[0].stem();
    for k in 0..4 {
        let lower = io::read_wlk(&bounds.join(format!("{stem}.lower.l{k}.wlk"))).unwrap();
        let upper = io::read_wlk(&bounds.join(format!("{stem}.upper.l{k}.wlk"))).unwrap();
        assert_eq!(lower.rows(), 64 >> k);
        assert!(lower.values().iter().zip(upper.values()).all(|(l, u)| l <= u));
    }

    let curves = t.join("curves");
    assert_eq!(code(&wlk(&["curves", "--eval", path(&ev), "--out", path(&curves)])), 0);
    assert_eq!(std::fs::read(ev.join("roc.svg")).unwrap(), std::fs::read(curves.join("roc.svg")).unwrap());
    assert_eq!(std::fs::read(ev.join("froc.svg")).unwrap(), std::fs::read(curves.join("froc.svg")).unwrap());
}

#[test]
fn perfect_predictions_score_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data);
    let ds = Dataset::load(&data.join("manifest.json")).unwrap();
    let pred = tmp.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    for rec in ds.split(Split::Test) {
        let pts = rec.input_points(ds.input_size);
        let mask = disk_mask(&pts, 64, 64, 2.0, 6.25);
        let map = mask.map(|m| if m > 0.0 { 0.9 } else { 0.01 });
        io::write_wlk(&pred.join(format!("{}.wlk", rec.stem())), &map).unwrap();
    }
    let ev = tmp.path().join("eval");
    let out = wlk(&["eval", "--data", path(&data), "--predictions", path(&pred), "--out", path(&ev)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["froc_score"], 1.0);
    assert_eq!(summary["auroc"], 1.0);
}

#[test]
fn ablate_rows_and_duplicates() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data);
    let grid = tmp.path().join("grid.json");
    let cell = r#"{"tau": 0.25, "r_lower": 6.25, "r_upper": 25, "divergence": "mse"}"#;
    let bad = r#"{"tau": 0.25, "r_lower": 30, "r_upper": 25, "divergence": "kld"}"#;
    std::fs::write(&grid, format!("[{cell}, {cell}, {bad}]")).unwrap();
    for jobs in ["1", "2"] {
        let out_dir = tmp.path().join(format!("abl{jobs}"));
        let mut args = vec!["ablate", "--data", path(&data), "--out", path(&out_dir), "--grid", path(&grid), "--jobs", jobs];
        args.extend_from_slice(SMALL);
        let out = wlk(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "tau,r_lower,r_upper,divergence,auroc,recall_at_01,froc_score");
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1], rows[2]);
        assert!(rows[3].ends_with("error,error,error"));
    }
    let seq = std::fs::read_to_string(tmp.path().join("abl1/ablation.csv")).unwrap();
    let par = std::fs::read_to_string(tmp.path().join("abl2/ablation.csv")).unwrap();
    assert_eq!(seq, par);
}
