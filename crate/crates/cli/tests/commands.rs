use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sensword::dataset::write_ucihar;
use sensword::{generate_synthetic, DataSequence, EvalReport, MultiSensorDataset, Split, SyntheticConfig};
use sensword_cli::commands::{self, SweepGrid, SweepRow};
use sensword_cli::{bundle, RunConfig};
use tempfile::TempDir;

fn synthetic_file(dir: &Path, classes: usize, noise: f64) -> PathBuf {
    let mut cfg = SyntheticConfig::preset(45, 64, classes, noise);
    cfg.seed = 4;
    let path = dir.join(format!("synthetic_{classes}_{noise}.toml"));
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn config(dir: &Path, out: &str, noise: f64) -> RunConfig {
    RunConfig {
        synthetic: Some(synthetic_file(dir, 3, noise)),
        window: 16,
        characters: 8,
        iterations: 120,
        burn_in: 60,
        seed: 17,
        out: dir.join(out),
        ..RunConfig::default()
    }
}

fn read_report(path: &Path) -> EvalReport {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn binary(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sensword"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn noiseless_training_is_perfect_and_writes_the_bundle() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bundle", 0.0);
    let fitted = commands::train(&cfg).unwrap();
    assert_eq!(fitted.report.as_ref().unwrap().macro_f1, 1.0);
    for name in [
        bundle::CODEBOOKS,
        bundle::VOCAB,
        bundle::MODEL,
        bundle::REPORT,
        bundle::CONFUSION,
        bundle::THETA,
        bundle::RUN_LOG,
        bundle::WORD_FREQ,
    ] {
        assert!(cfg.out.join(name).is_file(), "missing {name}");
    }
    let stored = read_report(&cfg.out.join(bundle::REPORT));
    assert_eq!(&stored, fitted.report.as_ref().unwrap());
    let theta = fs::read_to_string(cfg.out.join(bundle::THETA)).unwrap();
    assert_eq!(theta.lines().count(), 46);
    assert!(theta.starts_with("doc_id,true_label,predicted_class,theta_0,theta_1,theta_2\n"));
}

#[test]
fn same_config_and_seed_give_identical_files() {
    let tmp = TempDir::new().unwrap();
    let a = config(tmp.path(), "a", 0.3);
    let b = RunConfig {
        out: tmp.path().join("b"),
        ..a.clone()
    };
    commands::train(&a).unwrap();
    commands::train(&b).unwrap();
    let (sa, sb) = (snapshot(&a.out), snapshot(&b.out));
    for (name, bytes) in &sa {
        if name != bundle::RUN_LOG {
            assert_eq!(bytes, &sb[name], "{name} differs");
        }
    }
}

#[test]
fn rerunning_from_the_run_log_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "first", 0.3);
    commands::train(&cfg).unwrap();
    let before = snapshot(&cfg.out);
    let logged = RunConfig::load(&cfg.out.join(bundle::RUN_LOG)).unwrap();
    assert_eq!(logged, cfg);
    commands::train(&logged).unwrap();
    assert_eq!(snapshot(&cfg.out), before);
}

#[test]
fn apply_to_training_split_reproduces_training_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bundle", 0.4);
    commands::train(&cfg).unwrap();
    let apply_cfg = RunConfig {
        out: tmp.path().join("applied"),
        ..cfg.clone()
    };
    let applied = commands::apply(&apply_cfg, &cfg.out, Split::Train).unwrap();
    let stored = read_report(&cfg.out.join(bundle::REPORT));
    assert_eq!(applied.report.as_ref().unwrap(), &stored);
    assert_eq!(
        fs::read(cfg.out.join(bundle::THETA)).unwrap(),
        fs::read(apply_cfg.out.join(bundle::THETA)).unwrap()
    );
}

#[test]
fn apply_never_mutates_the_bundle() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bundle", 0.3);
    commands::train(&cfg).unwrap();
    let before = snapshot(&cfg.out);
    let elsewhere = RunConfig {
        out: tmp.path().join("test_eval"),
        ..cfg.clone()
    };
    let applied = commands::apply(&elsewhere, &cfg.out, Split::Test).unwrap();
    assert!(applied.report.is_some());
    assert_eq!(snapshot(&cfg.out), before);

    let into_bundle = cfg.out.to_string_lossy().into_owned();
    let synth = cfg.synthetic.as_ref().unwrap().to_string_lossy().into_owned();
    let (code, _, err) = binary(&["apply", "--bundle", &into_bundle, "--synthetic", &synth, "--out", &into_bundle]);
    assert_eq!(code, 1, "{err}");
    assert_eq!(snapshot(&cfg.out), before);
}

#[test]
fn unlabeled_data_gets_theta_without_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bundle", 0.2);
    commands::train(&cfg).unwrap();

    let labeled = generate_synthetic(&SyntheticConfig::preset(9, 64, 3, 0.2), 99).unwrap();
    let unlabeled = MultiSensorDataset::new(
        labeled
            .sequences()
            .iter()
            .map(|s| DataSequence {
                channels: s.channels.clone(),
                label: None,
            })
            .collect(),
        Vec::new(),
    )
    .unwrap();
    let root = tmp.path().join("har");
    write_ucihar(&unlabeled, &root, Split::Test).unwrap();

    let apply_cfg = RunConfig {
        synthetic: None,
        data: Some(root),
        out: tmp.path().join("unlabeled_out"),
        ..cfg.clone()
    };
    let applied = commands::apply(&apply_cfg, &cfg.out, Split::Test).unwrap();
    assert!(applied.report.is_none());
    assert!(!apply_cfg.out.join(bundle::REPORT).exists());
    let theta = fs::read_to_string(apply_cfg.out.join(bundle::THETA)).unwrap();
    let rows: Vec<&str> = theta.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[1], "");
        assert!(!cols[2].is_empty());
        let sum: f64 = cols[3..].iter().map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}

#[test]
fn channel_mismatch_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bundle", 0.2);
    commands::train(&cfg).unwrap();
    let mut narrow = SyntheticConfig::preset(6, 64, 3, 0.2);
    narrow.channels.truncate(2);
    narrow.archetypes.iter_mut().for_each(|a| a.truncate(2));
    let path = tmp.path().join("narrow.toml");
    fs::write(&path, narrow.to_toml().unwrap()).unwrap();
    let apply_cfg = RunConfig {
        synthetic: Some(path),
        out: tmp.path().join("narrow_out"),
        ..cfg.clone()
    };
    let err = commands::apply(&apply_cfg, &cfg.out, Split::Test).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("do not match codebook channels"), "{err}");
}

#[test]
fn evaluate_recomputes_the_applied_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bundle", 0.4);
    commands::train(&cfg).unwrap();
    let apply_cfg = RunConfig {
        out: tmp.path().join("applied"),
        ..cfg.clone()
    };
    let applied = commands::apply(&apply_cfg, &cfg.out, Split::Test).unwrap();
    let evaluated = commands::evaluate(
        &apply_cfg.out.join(bundle::THETA),
        &cfg.out,
        cfg.mapping,
        false,
        &tmp.path().join("evaluated"),
    )
    .unwrap();
    let mut expected = applied.report.unwrap();
    expected.stats = None;
    assert_eq!(evaluated, expected);
}

#[test]
fn single_cell_sweep_matches_train_and_apply() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bundle", 0.5);
    let fitted = commands::train(&cfg).unwrap();
    let applied = commands::apply(
        &RunConfig {
            out: tmp.path().join("applied"),
            ..cfg.clone()
        },
        &cfg.out,
        Split::Test,
    )
    .unwrap();

    let sweep_cfg = RunConfig {
        out: tmp.path().join("sweep"),
        ..cfg.clone()
    };
    let grid = SweepGrid::new(vec![16], vec![8], vec![17]).unwrap();
    let rows = commands::sweep(&sweep_cfg, &grid).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].train_f1, Some(fitted.report.unwrap().macro_f1));
    assert_eq!(rows[0].test_f1, Some(applied.report.unwrap().macro_f1));
    assert_eq!(rows[0].error, None);
}

#[test]
fn sweep_resumes_and_records_failing_cells() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "sweep", 0.5);
    let first = commands::sweep(&cfg, &SweepGrid::new(vec![16], vec![6], vec![1]).unwrap()).unwrap();
    let path = cfg.out.join(commands::SWEEP_CSV);
    // tamper with the stored row: a resumed sweep must keep it as is
    let mut stored = first.clone();
    stored[0].train_f1 = Some(0.25);
    commands::write_rows(&path, &stored).unwrap();

    // 2000 characters cannot be drawn from 45 x 7 subsequences
    let grid = SweepGrid::new(vec![16, 20], vec![6, 2000], vec![1, 2]).unwrap();
    let rows = commands::sweep(&cfg, &grid).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0].train_f1, Some(0.25));
    let failed: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    assert_eq!(failed.len(), 4);
    assert!(failed.iter().all(|r| r.v == 2000 && r.train_f1.is_none()));
    assert!(failed[0].error.as_ref().unwrap().contains("codebook stage"));
    let reread: Vec<SweepRow> = commands::read_rows(&path).unwrap();
    assert_eq!(reread, rows);
}

#[test]
fn zero_removal_ablation_equals_baseline() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bundle", 0.5);
    let fitted = commands::train(&cfg).unwrap();
    let applied = commands::apply(
        &RunConfig {
            out: tmp.path().join("applied"),
            ..cfg.clone()
        },
        &cfg.out,
        Split::Test,
    )
    .unwrap();
    let ablate_cfg = RunConfig {
        out: tmp.path().join("ablation"),
        ..cfg.clone()
    };
    let rows = commands::ablate(&ablate_cfg, &[0, 2, 5], None).unwrap();
    assert_eq!(rows.iter().map(|r| r.n_removed).collect::<Vec<_>>(), vec![0, 2, 5]);
    assert_eq!(rows[0].train_f1, fitted.report.unwrap().macro_f1);
    assert_eq!(rows[0].test_f1, applied.report.unwrap().macro_f1);
    let from_bundle = commands::ablate(&ablate_cfg, &[0, 2, 5], Some(&cfg.out)).unwrap();
    assert_eq!(from_bundle, rows);

    let v = fitted.corpus.vocabulary.len();
    let err = commands::ablate(&ablate_cfg, &[v + 1], None).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn stats_describe_the_training_corpus() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "bundle", 0.3);
    let fitted = commands::train(&cfg).unwrap();
    let stats_cfg = RunConfig {
        out: tmp.path().join("stats"),
        ..cfg.clone()
    };
    let s = commands::stats(&stats_cfg, None).unwrap();
    assert_eq!((s.d, s.n, s.b, s.k), (45, 45 * 21, 21, 3));
    assert_eq!(s, fitted.stats());
    assert_eq!(commands::stats(&stats_cfg, Some(&cfg.out)).unwrap(), s);
    let freq = fs::read_to_string(stats_cfg.out.join(bundle::WORD_FREQ)).unwrap();
    assert_eq!(freq.lines().count(), s.v + 1);
}

#[test]
fn binary_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let (code, out, _) = binary(&["--show-config"]);
    assert_eq!(code, 0);
    let defaults = RunConfig::from_toml(&out).unwrap();
    assert_eq!(defaults, RunConfig::default());

    assert_eq!(binary(&["train"]).0, 1);
    assert_eq!(binary(&["no-such-command"]).0, 1);
    let synth = synthetic_file(tmp.path(), 3, 0.1);
    let synth = synth.to_str().unwrap();
    assert_eq!(binary(&["train", "--synthetic", synth, "-p", "1"]).0, 1);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "windw = 3\n").unwrap();
    assert_eq!(binary(&["train", "--config", bad.to_str().unwrap()]).0, 1);

    let missing = tmp.path().join("nowhere");
    let (code, _, err) = binary(&["train", "--data", missing.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("ingest stage") && err.contains("body_acc_x_train.txt"), "{err}");

    let out = tmp.path().join("cli_bundle");
    let (code, stdout, err) = binary(&[
        "train",
        "--synthetic",
        synth,
        "-p",
        "16",
        "-v",
        "8",
        "--iters",
        "60",
        "--burn-in",
        "30",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("train macro F1"));
    let logged = RunConfig::load(&out.join(bundle::RUN_LOG)).unwrap();
    assert_eq!((logged.window, logged.characters, logged.iterations), (16, 8, 60));
}
