//! Sliding-window subsequences and per-channel k-means codebooks whose
//! centroids act as the sensory characters of a channel.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelKey, MultiSensorDataset};
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, nearest, KMeansConfig};
use crate::seed::{derive_seed, tag};

/// Window length `p` and stride, always `p / 2` (half-window overlap).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowConfig {
    size: usize,
    stride: usize,
}

impl WindowConfig {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Window(format!("window size {size} is below 2")));
        }
        Ok(Self {
            size,
            stride: size / 2,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn check_length(&self, t: usize) -> Result<()> {
        if self.size > t {
            return Err(Error::Window(format!(
                "window size {} exceeds sequence length {t}",
                self.size
            )));
        }
        Ok(())
    }

    /// Number of complete windows in a series of length `t`; trailing
    /// partial windows are not counted.
    pub fn count(&self, t: usize) -> usize {
        if self.size > t {
            0
        } else {
            (t - self.size) / self.stride + 1
        }
    }

    pub fn offsets(&self, t: usize) -> impl Iterator<Item = usize> {
        let stride = self.stride;
        (0..self.count(t)).map(move |i| i * stride)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subsequence<'a> {
    pub offset: usize,
    pub values: &'a [f64],
}

pub fn extract_subsequences(series: &[f64], window: WindowConfig) -> Result<Vec<Subsequence<'_>>> {
    window.check_length(series.len())?;
    Ok(window
        .offsets(series.len())
        .map(|offset| Subsequence {
            offset,
            values: &series[offset..offset + window.size],
        })
        .collect())
}

/// The `v` sensory characters of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCodebook {
    channel: ChannelKey,
    dim: usize,
    centroids: Vec<f64>,
}

impl ChannelCodebook {
    pub fn new(channel: ChannelKey, centroids: Vec<Vec<f64>>) -> Result<Self> {
        let dim = centroids.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Config(format!("codebook for {channel} is empty")));
        }
        if let Some(bad) = centroids.iter().find(|c| c.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                actual: bad.len(),
            });
        }
        if centroids.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("codebook for {channel} has non-finite values")));
        }
        Ok(Self {
            channel,
            dim,
            centroids: centroids.concat(),
        })
    }

    pub fn channel(&self) -> ChannelKey {
        self.channel
    }

    pub fn window_size(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centroids(&self) -> impl Iterator<Item = &[f64]> {
        self.centroids.chunks_exact(self.dim)
    }

    /// Nearest character by squared Euclidean distance; ties go to the
    /// lowest index.
    pub fn assign_character(&self, values: &[f64]) -> Result<usize> {
        if values.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: values.len(),
            });
        }
        Ok(nearest(values, &self.centroids, self.dim).0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    window: WindowConfig,
    codebooks: BTreeMap<ChannelKey, ChannelCodebook>,
}

impl CodebookSet {
    pub fn new(window: WindowConfig, codebooks: Vec<ChannelCodebook>) -> Result<Self> {
        let v = codebooks
            .first()
            .map(ChannelCodebook::len)
            .ok_or_else(|| Error::Config("codebook set has no channels".into()))?;
        let mut map = BTreeMap::new();
        for cb in codebooks {
            if cb.len() != v {
                return Err(Error::Config(format!(
                    "channel {} has {} characters, expected {v}",
                    cb.channel,
                    cb.len()
                )));
            }
            if cb.window_size() != window.size() {
                return Err(Error::Dimension {
                    expected: window.size(),
                    actual: cb.window_size(),
                });
            }
            if map.insert(cb.channel, cb).is_some() {
                return Err(Error::Config("duplicate channel in codebook set".into()));
            }
        }
        Ok(Self {
            window,
            codebooks: map,
        })
    }

    pub fn window(&self) -> WindowConfig {
        self.window
    }

    /// Characters per channel (`v`).
    pub fn characters(&self) -> usize {
        self.codebooks.values().next().map_or(0, ChannelCodebook::len)
    }

    pub fn channels(&self) -> impl Iterator<Item = ChannelKey> + '_ {
        self.codebooks.keys().copied()
    }

    pub fn get(&self, channel: ChannelKey) -> Option<&ChannelCodebook> {
        self.codebooks.get(&channel)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CodebookFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// On-disk form: window, channel list and row-major centroid matrices.
#[derive(Serialize, Deserialize)]
struct CodebookFile {
    window: WindowConfig,
    characters: usize,
    channels: Vec<ChannelKey>,
    centroids: BTreeMap<ChannelKey, Vec<Vec<f64>>>,
}

impl From<&CodebookSet> for CodebookFile {
    fn from(set: &CodebookSet) -> Self {
        Self {
            window: set.window,
            characters: set.characters(),
            channels: set.channels().collect(),
            centroids: set
                .codebooks
                .iter()
                .map(|(k, cb)| (*k, cb.centroids().map(<[f64]>::to_vec).collect()))
                .collect(),
        }
    }
}

impl TryFrom<CodebookFile> for CodebookSet {
    type Error = Error;

    fn try_from(mut file: CodebookFile) -> Result<Self> {
        let window = WindowConfig::new(file.window.size)?;
        if window != file.window {
            return Err(Error::Config("codebook stride must be half the window".into()));
        }
        let codebooks = file
            .channels
            .iter()
            .map(|k| {
                let rows = file
                    .centroids
                    .remove(k)
                    .ok_or_else(|| Error::Config(format!("no centroids for channel {k}")))?;
                ChannelCodebook::new(*k, rows)
            })
            .collect::<Result<Vec<_>>>()?;
        let set = CodebookSet::new(window, codebooks)?;
        if set.characters() != file.characters || !file.centroids.is_empty() {
            return Err(Error::Config("codebook file is inconsistent".into()));
        }
        Ok(set)
    }
}

/// All windows of one channel across the dataset, row-major.
fn pooled_subsequences(dataset: &MultiSensorDataset, channel: ChannelKey, window: WindowConfig) -> Vec<f64> {
    let t = dataset.sequence_length();
    let mut out = Vec::with_capacity(dataset.len() * window.count(t) * window.size());
    for seq in dataset.sequences() {
        let series = seq.channel(channel).expect("dataset channels are uniform");
        for offset in window.offsets(t) {
            out.extend_from_slice(&series[offset..offset + window.size()]);
        }
    }
    out
}

fn has_distinct_rows(data: &[f64], dim: usize, needed: usize) -> bool {
    let mut seen = HashSet::new();
    for row in data.chunks_exact(dim) {
        seen.insert(row.iter().map(|x| x.to_bits()).collect::<Vec<u64>>());
        if seen.len() >= needed {
            return true;
        }
    }
    false
}

pub fn channel_seed(seed: u64, channel: ChannelKey) -> u64 {
    let [s, a] = channel.seed_tags();
    derive_seed(seed, &[tag::CODEBOOK, s, a])
}

pub fn train_channel_codebook(
    dataset: &MultiSensorDataset,
    channel: ChannelKey,
    window: WindowConfig,
    v: usize,
    kmeans_cfg: &KMeansConfig,
    seed: u64,
) -> Result<ChannelCodebook> {
    if !dataset.channel_keys().contains(&channel) {
        return Err(Error::Consistency(format!("dataset has no channel {channel}")));
    }
    let data = pooled_subsequences(dataset, channel, window);
    if !has_distinct_rows(&data, window.size(), v) {
        return Err(Error::Training {
            channel,
            message: format!("fewer than {v} distinct subsequences"),
        });
    }
    let fit = kmeans(&data, window.size(), v, kmeans_cfg, channel_seed(seed, channel))
        .map_err(|e| Error::Training {
            channel,
            message: e.to_string(),
        })?;
    ChannelCodebook::new(
        channel,
        fit.centroids.chunks_exact(window.size()).map(<[f64]>::to_vec).collect(),
    )
}

/// Trains one codebook of `v` characters per dataset channel. Channels are
/// trained in parallel, each from its own derived seed.
pub fn train_codebooks(
    dataset: &MultiSensorDataset,
    window: WindowConfig,
    v: usize,
    kmeans_cfg: &KMeansConfig,
    seed: u64,
) -> Result<CodebookSet> {
    if v < 2 {
        return Err(Error::Config(format!("need at least 2 characters per channel, got {v}")));
    }
    window.check_length(dataset.sequence_length())?;
    let codebooks = dataset
        .channel_keys()
        .par_iter()
        .map(|&k| train_channel_codebook(dataset, k, window, v, kmeans_cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    CodebookSet::new(window, codebooks)
}
