//! Multi-sensor recordings: channel identifiers, data sequences, the UCI-HAR
//! inertial-signals loader and a synthetic generator for offline runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::Config(format!("unknown axis {other:?}"))),
        }
    }
}

/// Sensors in canonical order. Whenever characters of several sensors are
/// concatenated, they follow this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sensor {
    Accelerometer,
    Gyroscope,
}

impl Sensor {
    pub const ALL: [Sensor; 2] = [Sensor::Accelerometer, Sensor::Gyroscope];

    pub fn as_str(self) -> &'static str {
        match self {
            Sensor::Accelerometer => "acc",
            Sensor::Gyroscope => "gyro",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl FromStr for Sensor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acc" => Ok(Sensor::Accelerometer),
            "gyro" => Ok(Sensor::Gyroscope),
            other => Err(Error::Config(format!("unknown sensor {other:?}"))),
        }
    }
}

/// One measurement channel: a sensor together with one of its axes.
/// Ordered sensor-major, so `acc_x < acc_y < acc_z < gyro_x < ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelKey {
    pub sensor: Sensor,
    pub axis: Axis,
}

impl ChannelKey {
    pub const fn new(sensor: Sensor, axis: Axis) -> Self {
        Self { sensor, axis }
    }

    /// The six inertial channels, accelerometer first.
    pub fn inertial() -> Vec<ChannelKey> {
        Sensor::ALL
            .iter()
            .flat_map(|&s| Axis::ALL.iter().map(move |&a| ChannelKey::new(s, a)))
            .collect()
    }

    /// Integer tags used for per-channel seed derivation.
    pub fn seed_tags(self) -> [u64; 2] {
        [self.sensor.index(), self.axis.index()]
    }
}

impl fmt::Display for ChannelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.sensor.as_str(), self.axis.as_str())
    }
}

impl FromStr for ChannelKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (sensor, axis) = s
            .rsplit_once('_')
            .ok_or_else(|| Error::Config(format!("malformed channel key {s:?}")))?;
        Ok(ChannelKey::new(sensor.parse()?, axis.parse()?))
    }
}

impl Serialize for ChannelKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChannelKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActivityLabel {
    pub id: usize,
    pub name: String,
}

/// UCI-HAR activity names in label-file order (file values 1..=6).
pub const UCI_HAR_CLASSES: [&str; 6] = ["WA", "WU", "WD", "SI", "ST", "LA"];

#[derive(Debug, Clone, PartialEq)]
pub struct DataSequence {
    pub channels: BTreeMap<ChannelKey, Vec<f64>>,
    pub label: Option<ActivityLabel>,
}

impl DataSequence {
    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, key: ChannelKey) -> Option<&[f64]> {
        self.channels.get(&key).map(Vec::as_slice)
    }
}

/// A validated collection of equally shaped sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSensorDataset {
    channel_keys: Vec<ChannelKey>,
    sequences: Vec<DataSequence>,
    classes: Vec<ActivityLabel>,
    length: usize,
}

impl MultiSensorDataset {
    /// Checks shape invariants: at least one sequence, identical channel sets,
    /// identical length `t >= 2`, finite samples, and contiguous unique
    /// class ids when `classes` is non-empty.
    pub fn new(sequences: Vec<DataSequence>, classes: Vec<ActivityLabel>) -> Result<Self> {
        let first = sequences
            .first()
            .ok_or_else(|| Error::Consistency("dataset has no sequences".into()))?;
        let channel_keys: Vec<ChannelKey> = first.channels.keys().copied().collect();
        if channel_keys.is_empty() {
            return Err(Error::Consistency("sequences have no channels".into()));
        }
        let length = first.len();
        if length < 2 {
            return Err(Error::Consistency(format!(
                "sequence length {length} is below the minimum of 2"
            )));
        }
        for (i, seq) in sequences.iter().enumerate() {
            if !seq.channels.keys().copied().eq(channel_keys.iter().copied()) {
                return Err(Error::Consistency(format!(
                    "sequence {i} has a different channel set"
                )));
            }
            for (key, values) in &seq.channels {
                if values.len() != length {
                    return Err(Error::Consistency(format!(
                        "sequence {i}, channel {key}: length {} differs from {length}",
                        values.len()
                    )));
                }
                if let Some(j) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Consistency(format!(
                        "sequence {i}, channel {key}: non-finite sample at {j}"
                    )));
                }
            }
        }
        let mut names = BTreeSet::new();
        for (i, class) in classes.iter().enumerate() {
            if class.id != i || !names.insert(class.name.as_str()) {
                return Err(Error::Consistency(
                    "class ids must be contiguous from 0 with unique names".into(),
                ));
            }
        }
        for (i, seq) in sequences.iter().enumerate() {
            if let Some(label) = &seq.label {
                if classes.get(label.id) != Some(label) {
                    return Err(Error::Consistency(format!(
                        "sequence {i} carries unknown label {label:?}"
                    )));
                }
            }
        }
        Ok(Self {
            channel_keys,
            sequences,
            classes,
            length,
        })
    }

    pub fn channel_keys(&self) -> &[ChannelKey] {
        &self.channel_keys
    }

    pub fn sequences(&self) -> &[DataSequence] {
        &self.sequences
    }

    pub fn classes(&self) -> &[ActivityLabel] {
        &self.classes
    }

    /// Samples per channel (`t`).
    pub fn sequence_length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Label ids in sequence order, or `None` if any sequence is unlabeled.
    pub fn label_ids(&self) -> Option<Vec<usize>> {
        self.sequences
            .iter()
            .map(|s| s.label.as_ref().map(|l| l.id))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

fn signal_file(root: &Path, split: Split, key: ChannelKey) -> PathBuf {
    let kind = match key.sensor {
        Sensor::Accelerometer => "body_acc",
        Sensor::Gyroscope => "body_gyro",
    };
    root.join(split.as_str())
        .join("Inertial Signals")
        .join(format!("{kind}_{}_{}.txt", key.axis.as_str(), split.as_str()))
}

fn label_file(root: &Path, split: Split) -> PathBuf {
    root.join(split.as_str())
        .join(format!("y_{}.txt", split.as_str()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::Load {
        path: path.to_path_buf(),
        source,
    })
}

fn read_signal_rows(path: &Path, expected_len: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut width = expected_len;
    for (row, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| Error::Load {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|tok| match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    message: format!("invalid sample {tok:?}"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    message: format!("expected {w} samples, found {}", values.len()),
                })
            }
            None => width = Some(values.len()),
            _ => {}
        }
        rows.push(values);
    }
    Ok(rows)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (row, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| Error::Load {
            path: path.to_path_buf(),
            source,
        })?;
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        let value: usize = tok.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("invalid label {tok:?}"),
        })?;
        if !(1..=UCI_HAR_CLASSES.len()).contains(&value) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                message: format!("label {value} outside 1..={}", UCI_HAR_CLASSES.len()),
            });
        }
        labels.push(value - 1);
    }
    Ok(labels)
}

pub fn ucihar_classes() -> Vec<ActivityLabel> {
    UCI_HAR_CLASSES
        .iter()
        .enumerate()
        .map(|(id, name)| ActivityLabel {
            id,
            name: (*name).to_string(),
        })
        .collect()
}

/// Loads one split of the UCI-HAR inertial signals (body acceleration and
/// body angular velocity, three axes each) from the dataset root directory.
/// Values are used exactly as stored. Without a `y_<split>.txt` file the
/// sequences are unlabeled.
pub fn load_ucihar(root: impl AsRef<Path>, split: Split) -> Result<MultiSensorDataset> {
    let root = root.as_ref();
    let keys = ChannelKey::inertial();
    // fail on a missing file before parsing anything
    for key in &keys {
        let path = signal_file(root, split, *key);
        if !path.is_file() {
            return Err(Error::Load {
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                path,
            });
        }
    }
    let labels_path = label_file(root, split);
    let labels = if labels_path.is_file() {
        Some(read_labels(&labels_path)?)
    } else {
        info!("{} not found; loading unlabeled sequences", labels_path.display());
        None
    };

    let mut width = None;
    let mut per_channel: Vec<Vec<Vec<f64>>> = Vec::with_capacity(keys.len());
    for key in &keys {
        let path = signal_file(root, split, *key);
        let rows = read_signal_rows(&path, width)?;
        width = rows.first().map(Vec::len);
        let (expected, against) = match (&labels, per_channel.first()) {
            (Some(l), _) => (l.len(), labels_path.clone()),
            (None, Some(first)) => (first.len(), signal_file(root, split, keys[0])),
            (None, None) => (rows.len(), path.clone()),
        };
        if rows.len() != expected {
            return Err(Error::Consistency(format!(
                "{} has {} rows but {} has {expected}",
                path.display(),
                rows.len(),
                against.display(),
            )));
        }
        per_channel.push(rows);
    }

    let classes = ucihar_classes();
    let n = per_channel[0].len();
    let mut iters: Vec<_> = per_channel.into_iter().map(Vec::into_iter).collect();
    let sequences = (0..n)
        .map(|i| DataSequence {
            channels: keys
                .iter()
                .zip(iters.iter_mut())
                .map(|(k, it)| (*k, it.next().expect("row counts checked")))
                .collect(),
            label: labels.as_ref().map(|l| classes[l[i]].clone()),
        })
        .collect();
    MultiSensorDataset::new(sequences, classes)
}

/// Writes a dataset in the UCI-HAR layout. Only the six inertial channels are
/// supported; labels are written 1-based, and no label file is written for
/// unlabeled data.
pub fn write_ucihar(dataset: &MultiSensorDataset, root: impl AsRef<Path>, split: Split) -> Result<()> {
    let root = root.as_ref();
    if dataset.channel_keys() != ChannelKey::inertial().as_slice() {
        return Err(Error::Consistency(
            "UCI-HAR layout requires the six inertial channels".into(),
        ));
    }
    fs::create_dir_all(root.join(split.as_str()).join("Inertial Signals"))?;
    for key in dataset.channel_keys() {
        let mut out = BufWriter::new(File::create(signal_file(root, split, *key))?);
        for seq in dataset.sequences() {
            let row = &seq.channels[key];
            for v in row {
                write!(out, " {v:e}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
    }
    let Some(labels) = dataset.label_ids() else {
        if dataset.sequences().iter().any(|s| s.label.is_some()) {
            return Err(Error::Consistency("cannot write partially labeled data".into()));
        }
        return Ok(());
    };
    let mut out = BufWriter::new(File::create(label_file(root, split))?);
    for id in labels {
        writeln!(out, "{}", id + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// A sinusoid `offset + amplitude * sin(2π * frequency * i / t + phase)`;
/// `frequency` counts cycles per sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub frequency: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub offset: f64,
}

/// Declarative description of a synthetic dataset.
///
/// ```toml
/// n = 60
/// t = 64
/// noise = 0.1
/// seed = 7
/// classes = ["slow", "fast"]
/// # optional, defaults to the six inertial channels
/// channels = ["acc_x", "gyro_x"]
/// # one list per class, one wave per channel
/// archetypes = [
///   [{ frequency = 1.0, amplitude = 1.0 }, { frequency = 2.0, amplitude = 0.5 }],
///   [{ frequency = 4.0, amplitude = 2.0 }, { frequency = 3.0, amplitude = 1.0 }],
/// ]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    pub t: usize,
    #[serde(default = "ChannelKey::inertial")]
    pub channels: Vec<ChannelKey>,
    pub classes: Vec<String>,
    pub archetypes: Vec<Vec<Wave>>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticConfig {
    /// Distinct archetypes for `classes` classes on the six inertial
    /// channels: class `c` oscillates at `2(c+1)` cycles per sequence with
    /// amplitude `1 + c`, each channel phase-shifted.
    pub fn preset(n: usize, t: usize, classes: usize, noise: f64) -> Self {
        let channels = ChannelKey::inertial();
        let archetypes = (0..classes)
            .map(|c| {
                (0..channels.len())
                    .map(|j| Wave {
                        frequency: 2.0 * (c + 1) as f64,
                        amplitude: 1.0 + c as f64,
                        phase: 0.5 * j as f64,
                        offset: 0.0,
                    })
                    .collect()
            })
            .collect();
        Self {
            n,
            t,
            channels,
            classes: (0..classes).map(|c| format!("C{c}")).collect(),
            archetypes,
            noise,
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.t < 2 {
            return Err(Error::Config("t must be at least 2".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("at least one class is required".into()));
        }
        if self.archetypes.len() != self.classes.len() {
            return Err(Error::Config(format!(
                "{} archetypes for {} classes",
                self.archetypes.len(),
                self.classes.len()
            )));
        }
        let distinct: BTreeSet<_> = self.channels.iter().collect();
        if self.channels.is_empty() || distinct.len() != self.channels.len() {
            return Err(Error::Config("channels must be non-empty and distinct".into()));
        }
        if self
            .archetypes
            .iter()
            .any(|waves| waves.len() != self.channels.len())
        {
            return Err(Error::Config(
                "every archetype needs one wave per channel".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Generates `n` sequences, class `i % classes` for sequence `i`, each
/// channel its archetype wave plus i.i.d. Gaussian noise of std `noise`.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<MultiSensorDataset> {
    config.validate()?;
    let mut rng = rng_from(derive_seed(seed, &[tag::SYNTHETIC]));
    let noise = Normal::new(0.0, config.noise).map_err(|e| Error::Config(e.to_string()))?;
    let classes: Vec<ActivityLabel> = config
        .classes
        .iter()
        .enumerate()
        .map(|(id, name)| ActivityLabel {
            id,
            name: name.clone(),
        })
        .collect();
    let t = config.t as f64;
    let sequences = (0..config.n)
        .map(|i| {
            let class = i % classes.len();
            let channels = config
                .channels
                .iter()
                .zip(&config.archetypes[class])
                .map(|(key, wave)| {
                    let values = (0..config.t)
                        .map(|s| {
                            let x = std::f64::consts::TAU * wave.frequency * s as f64 / t;
                            let clean = wave.offset + wave.amplitude * (x + wave.phase).sin();
                            if config.noise > 0.0 {
                                clean + noise.sample(&mut rng)
                            } else {
                                clean
                            }
                        })
                        .collect();
                    (*key, values)
                })
                .collect();
            DataSequence {
                channels,
                label: Some(classes[class].clone()),
            }
        })
        .collect();
    MultiSensorDataset::new(sequences, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_key_order_and_text_form() {
        let keys = ChannelKey::inertial();
        assert_eq!(keys.len(), 6);
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(Axis::X < Axis::Y && Axis::Y < Axis::Z);
        assert!(Sensor::Accelerometer < Sensor::Gyroscope);
        for k in keys {
            assert_eq!(k.to_string().parse::<ChannelKey>().unwrap(), k);
        }
        assert_eq!(keys_text(), "acc_x acc_y acc_z gyro_x gyro_y gyro_z");
        assert!("acc".parse::<ChannelKey>().is_err());
        assert!("mag_x".parse::<ChannelKey>().is_err());
    }

    fn keys_text() -> String {
        ChannelKey::inertial()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn synthetic_noiseless_is_class_pure() {
        let mut cfg = SyntheticConfig::preset(10, 64, 2, 0.0);
        cfg.channels.truncate(2);
        for a in &mut cfg.archetypes {
            a.truncate(2);
        }
        let ds = generate_synthetic(&cfg, 3).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.sequence_length(), 64);
        let labels = ds.label_ids().unwrap();
        for (i, a) in ds.sequences().iter().enumerate() {
            for (j, b) in ds.sequences().iter().enumerate() {
                let same_class = labels[i] == labels[j];
                assert_eq!(a.channels == b.channels, same_class, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SyntheticConfig::preset(12, 32, 3, 0.3);
        let a = generate_synthetic(&cfg, 99).unwrap();
        let b = generate_synthetic(&cfg, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&cfg, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_rejects_bad_config() {
        let mut cfg = SyntheticConfig::preset(10, 1, 2, 0.0);
        assert!(matches!(generate_synthetic(&cfg, 0), Err(Error::Config(_))));
        cfg.t = 16;
        cfg.n = 0;
        assert!(matches!(generate_synthetic(&cfg, 0), Err(Error::Config(_))));
        cfg.n = 4;
        cfg.archetypes.pop();
        assert!(matches!(generate_synthetic(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn synthetic_config_toml_round_trip() {
        let cfg = SyntheticConfig::preset(30, 48, 3, 0.1);
        let text = cfg.to_toml().unwrap();
        assert_eq!(SyntheticConfig::from_toml(&text).unwrap(), cfg);
        let doc = r#"
            n = 4
            t = 8
            classes = ["a"]
            channels = ["acc_x"]
            archetypes = [[{ frequency = 1.0, amplitude = 2.0 }]]
        "#;
        let parsed = SyntheticConfig::from_toml(doc).unwrap();
        assert_eq!(parsed.noise, 0.0);
        assert_eq!(parsed.channels, vec![ChannelKey::new(Sensor::Accelerometer, Axis::X)]);
    }

    #[test]
    fn dataset_rejects_non_finite_and_ragged() {
        let key = ChannelKey::new(Sensor::Accelerometer, Axis::X);
        let seq = |v: Vec<f64>| DataSequence {
            channels: [(key, v)].into_iter().collect(),
            label: None,
        };
        assert!(MultiSensorDataset::new(vec![seq(vec![0.0, f64::NAN])], vec![]).is_err());
        assert!(MultiSensorDataset::new(vec![seq(vec![0.0, 1.0]), seq(vec![0.0])], vec![]).is_err());
        assert!(MultiSensorDataset::new(vec![seq(vec![0.0])], vec![]).is_err());
        assert!(MultiSensorDataset::new(vec![], vec![]).is_err());
        assert!(MultiSensorDataset::new(vec![seq(vec![0.0, 1.0])], vec![]).is_ok());
    }
}
