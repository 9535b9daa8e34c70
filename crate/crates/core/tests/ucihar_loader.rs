use std::fs;
use std::path::Path;

use proptest::prelude::*;
use sensword::dataset::{write_ucihar, UCI_HAR_CLASSES};
use sensword::{generate_synthetic, load_ucihar, Error, MultiSensorDataset, Split, SyntheticConfig};
use tempfile::TempDir;

fn fixture(n: usize, t: usize, noise: f64, seed: u64) -> MultiSensorDataset {
    let mut cfg = SyntheticConfig::preset(n, t, 6, noise);
    cfg.classes = UCI_HAR_CLASSES.iter().map(|s| s.to_string()).collect();
    generate_synthetic(&cfg, seed).unwrap()
}

fn written(n: usize, split: Split) -> TempDir {
    let dir = TempDir::new().unwrap();
    write_ucihar(&fixture(n, 16, 0.3, 1), dir.path(), split).unwrap();
    dir
}

fn signal(root: &Path, name: &str) -> std::path::PathBuf {
    root.join("train").join("Inertial Signals").join(name)
}

#[test]
fn loads_what_was_written() {
    let dir = written(12, Split::Test);
    let loaded = load_ucihar(dir.path(), Split::Test).unwrap();
    assert_eq!(loaded, fixture(12, 16, 0.3, 1));
    assert_eq!(loaded.label_ids().unwrap(), (0..12).map(|i| i % 6).collect::<Vec<_>>());
    assert_eq!(loaded.sequence_length(), 16);
}

#[test]
fn missing_file_is_named() {
    let dir = written(6, Split::Train);
    fs::remove_file(signal(dir.path(), "body_gyro_y_train.txt")).unwrap();
    let err = load_ucihar(dir.path(), Split::Train).unwrap_err();
    assert!(matches!(err, Error::Load { .. }));
    assert!(err.to_string().contains("body_gyro_y_train.txt"), "{err}");
}

#[test]
fn bad_sample_reports_file_and_row() {
    let dir = written(6, Split::Train);
    let path = signal(dir.path(), "body_acc_z_train.txt");
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines[3] = lines[3].replacen(' ', " NaN ", 1);
    fs::write(&path, lines.join("\n")).unwrap();
    match load_ucihar(dir.path(), Split::Train).unwrap_err() {
        Error::Parse { path: p, row, .. } => {
            assert_eq!(p, path);
            assert_eq!(row, 3);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn ragged_row_is_a_parse_error() {
    let dir = written(6, Split::Train);
    let path = signal(dir.path(), "body_acc_x_train.txt");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let short = lines[2].rsplit_once(' ').unwrap().0.to_string();
    lines[2] = &short;
    fs::write(&path, lines.join("\n")).unwrap();
    assert!(matches!(load_ucihar(dir.path(), Split::Train), Err(Error::Parse { row: 2, .. })));
}

#[test]
fn label_out_of_range_is_rejected() {
    let dir = written(6, Split::Train);
    let path = dir.path().join("train").join("y_train.txt");
    fs::write(&path, "1\n2\n7\n4\n5\n6\n").unwrap();
    assert!(matches!(load_ucihar(dir.path(), Split::Train), Err(Error::Parse { row: 2, .. })));
}

#[test]
fn missing_label_file_loads_unlabeled() {
    let dir = written(6, Split::Train);
    fs::remove_file(dir.path().join("train").join("y_train.txt")).unwrap();
    let loaded = load_ucihar(dir.path(), Split::Train).unwrap();
    assert_eq!(loaded.len(), 6);
    assert!(loaded.label_ids().is_none());
    let again = TempDir::new().unwrap();
    write_ucihar(&loaded, again.path(), Split::Train).unwrap();
    assert!(!again.path().join("train").join("y_train.txt").exists());
    assert_eq!(load_ucihar(again.path(), Split::Train).unwrap(), loaded);
}

#[test]
fn ragged_channel_counts_are_a_consistency_error() {
    let dir = written(6, Split::Train);
    fs::remove_file(dir.path().join("train").join("y_train.txt")).unwrap();
    let path = signal(dir.path(), "body_gyro_x_train.txt");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.lines().take(5).collect::<Vec<_>>().join("\n")).unwrap();
    let err = load_ucihar(dir.path(), Split::Train).unwrap_err();
    assert!(matches!(err, Error::Consistency(_)), "{err}");
}

#[test]
fn row_count_mismatch_is_a_consistency_error() {
    let dir = written(6, Split::Train);
    let path = dir.path().join("train").join("y_train.txt");
    fs::write(&path, "1\n2\n3\n4\n5\n").unwrap();
    let err = load_ucihar(dir.path(), Split::Train).unwrap_err();
    assert!(matches!(err, Error::Consistency(_)), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn write_then_load_is_lossless(n in 1usize..20, t in 2usize..40, seed in any::<u64>()) {
        let data = fixture(n, t, 1.7, seed);
        let dir = TempDir::new().unwrap();
        write_ucihar(&data, dir.path(), Split::Train).unwrap();
        prop_assert_eq!(load_ucihar(dir.path(), Split::Train).unwrap(), data);
    }
}
