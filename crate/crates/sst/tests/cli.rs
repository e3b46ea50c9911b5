use std::fs;
use std::path::{Path, PathBuf};

use sst::cli::{main_with_args, write_dataset};
use sst::report::read_roc;
use sst_core::data::{synth_dataset, Batch, SynthSpec};
use sst_core::metrics::auc;
use sst_core::Tensor;

fn sst(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("sst").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join(format!("data{seed}"));
    let code = sst(&[
        "synth", "--tasks", "2", "--samples", "300", "--features", "5", "--timesteps", "3", "--imbalance", "0.3",
        "--seed", seed, "--out", s(&out),
    ]);
    assert_eq!(code, 0);
    out.join("manifest.json")
}

const SMALL: [&str; 12] =
    ["--n-layers", "1", "--dmodel", "8", "--dff", "8", "--heads", "2", "--batch-size", "32", "--warmup", "20"];

fn train(manifest: &Path, out: &Path, seed: &str, epochs: &str) -> i32 {
    let mut args = vec!["train", "--manifest", s(manifest), "--out", s(out), "--seed", seed, "--epochs-max", epochs];
    args.extend(SMALL);
    sst(&args)
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "9");
    let b = dir.path().join("again");
    sst(&[
        "synth", "--tasks", "2", "--samples", "300", "--features", "5", "--timesteps", "3", "--imbalance", "0.3",
        "--seed", "9", "--out", s(&b),
    ]);
    for f in ["x_train.npy", "y_train.npy", "x_val.npy", "y_test.npy", "manifest.json"] {
        assert_eq!(fs::read(a.parent().unwrap().join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = synth(dir.path(), "10");
    assert_ne!(fs::read(a.with_file_name("x_train.npy")).unwrap(), fs::read(c.with_file_name("x_train.npy")).unwrap());
}

#[test]
fn usage_and_input_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(sst(&["frobnicate"]), 2);
    assert_eq!(sst(&["train", "--manifest", "/nonexistent/manifest.json", "--out", s(&out)]), 2);
    assert_eq!(sst(&["synth", "--tasks", "2", "--samples", "0", "--out", s(&out)]), 2);

    let manifest = synth(dir.path(), "1");
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"n_tasks": 5}"#).unwrap();
    assert_eq!(sst(&["train", "--manifest", s(&manifest), "--config", s(&config), "--out", s(&out)]), 2);
    fs::write(&config, r#"{"d_model": 8}"#).unwrap();
    assert_eq!(sst(&["train", "--manifest", s(&manifest), "--config", s(&config), "--out", s(&out)]), 2);

    // 11 * 10 = 110 points needs --confirm
    fs::write(&config, r#"{"dff": [1,2,3,4,5,6,7,8,9,10,11], "dropout_rate": [0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9]}"#)
        .unwrap();
    assert_eq!(sst(&["grid", "--manifest", s(&manifest), "--config", s(&config), "--out", s(&out)]), 2);

    let x = manifest.with_file_name("x_val.npy");
    let bytes = fs::read(&x).unwrap();
    fs::write(&x, &bytes[..bytes.len() - 8]).unwrap();
    assert_eq!(sst(&["eval", "--checkpoint", "missing.sst", "--manifest", s(&manifest), "--out", s(&out)]), 2);
}

#[test]
fn divergence_exits_with_3_and_keeps_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "2");
    let out = dir.path().join("run");
    let mut args = vec!["train", "--manifest", s(&manifest), "--out", s(&out), "--epochs-max", "3", "--lr-factor", "1e200"];
    args.extend(SMALL);
    assert_eq!(sst(&args), 3);
    assert!(out.join("epochs.csv").exists());
}

#[test]
fn eval_reports_runs_and_round_trips_roc() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "3");
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    assert_eq!(train(&manifest, &r1, "1", "3"), 0);
    assert_eq!(train(&manifest, &r2, "2", "3"), 0);

    let one = dir.path().join("eval1");
    let ck1 = r1.join("checkpoint.sst");
    assert_eq!(sst(&["eval", "--checkpoint", s(&ck1), "--manifest", s(&manifest), "--out", s(&one), "--roc-tasks", "1,2"]), 0);
    let report = fs::read_to_string(one.join("report.csv")).unwrap();
    let rows: Vec<Vec<&str>> = report.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[2].is_empty()), "one run has no std: {report}");
    for (task, points) in read_roc(&one.join("roc.csv")).unwrap() {
        let reported: f64 = rows[task - 1][1].parse().unwrap();
        assert_eq!(auc(&points), reported);
        assert!(one.join(format!("roc_task{task}.svg")).exists());
    }

    let two = dir.path().join("eval2");
    let ck2 = r2.join("checkpoint.sst");
    let args = ["eval", "--checkpoint", s(&ck1), "--checkpoint", s(&ck2), "--manifest", s(&manifest), "--out", s(&two)];
    assert_eq!(sst(&args), 0);
    for f in ["roc_1.csv", "roc_2.csv", "rates_1.csv", "rates_2.csv", "report.csv"] {
        assert!(two.join(f).exists(), "{f}");
    }
    let report = fs::read_to_string(two.join("report.csv")).unwrap();
    assert!(report.lines().skip(1).all(|l| !l.split(',').nth(2).unwrap().is_empty()));
}

#[test]
fn single_class_task_is_reported_as_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::with_total(200, 2, 2, 4, 0.3, 5).unwrap();
    let data = synth_dataset(&spec).unwrap();
    // Task 2 of the test split becomes all negative.
    let mut y = data.test.labels.data().to_vec();
    for row in y.chunks_mut(4) {
        if row[2] + row[3] > 0.0 {
            row[2] = 1.0;
            row[3] = 0.0;
        }
    }
    let test = Batch::from_labels(
        data.test.x.clone(),
        data.test.pad_mask.clone(),
        Tensor::new(data.test.labels.shape(), y).unwrap(),
    )
    .unwrap();
    let root = dir.path().join("data");
    write_dataset(&root, [&data.train, &data.val, &test], None).unwrap();
    let manifest = root.join("manifest.json");
    let run = dir.path().join("run");
    assert_eq!(train(&manifest, &run, "1", "1"), 0);
    let out = dir.path().join("eval");
    let ck = run.join("checkpoint.sst");
    assert_eq!(sst(&["eval", "--checkpoint", s(&ck), "--manifest", s(&manifest), "--out", s(&out)]), 0);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let task2 = report.lines().nth(2).unwrap();
    assert!(task2.starts_with("2,—,,0,"), "{report}");
}

#[test]
fn grid_resume_skips_finished_points() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "4");
    let config = dir.path().join("grid.json");
    fs::write(
        &config,
        r#"{"n_layers": 1, "dmodel": 8, "dff": [8, 16], "n_heads": 2, "batch_size": 64, "warmup": 20, "max_epochs": 2}"#,
    )
    .unwrap();
    let out = dir.path().join("grid");
    let args = ["grid", "--manifest", s(&manifest), "--config", s(&config), "--out", s(&out), "--jobs", "2"];
    assert_eq!(sst(&args), 0);
    let first = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(first.lines().count(), 3);
    assert!(first.lines().skip(1).all(|l| l.ends_with(",ok")));
    let best = fs::read_to_string(out.join("best_config.json")).unwrap();

    let mut resumed = args.to_vec();
    resumed.push("--resume");
    assert_eq!(sst(&resumed), 0);
    // Nothing was rerun: the table and the selection are unchanged.
    assert_eq!(fs::read_to_string(out.join("grid.csv")).unwrap(), first);
    assert_eq!(fs::read_to_string(out.join("best_config.json")).unwrap(), best);
}
