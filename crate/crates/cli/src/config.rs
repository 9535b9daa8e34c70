//! Run configuration: a flat TOML key-value file, overridable from the
//! command line.
//!
//! ```toml
//! data = "/data/UCI HAR Dataset"   # or: synthetic = "synthetic.toml"
//! window = 30                      # p, stride is always p / 2
//! characters = 29                  # v, k-means clusters per channel
//! topics = 6                       # K, defaults to the number of classes
//! alpha = 8.333                    # defaults to 50 / K
//! beta = 0.01
//! iterations = 1000
//! burn_in = 500
//! sample_lag = 0
//! seed = 1
//! mapping = "greedy"               # or "optimal"
//! remap_on_test = false
//! fit_hyperparams = false
//! kmeans_max_iter = 300
//! kmeans_tol = 1e-6
//! kmeans_restarts = 1
//! out = "out"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sensword::codebook::channel_seed;
use sensword::dataset::SyntheticConfig;
use sensword::lda::HyperFitConfig;
use sensword::seed::{derive_seed, tag};
use sensword::{
    generate_synthetic, load_ucihar, ChannelKey, KMeansConfig, LdaHyperparams, MappingMode, MultiSensorDataset,
    SamplerConfig, Split, WindowConfig,
};

use crate::error::{CliError, CliResult, Stage, StageExt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// UCI-HAR dataset root (the directory holding `train/` and `test/`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Synthetic dataset description, used instead of `data`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<PathBuf>,
    pub window: usize,
    pub characters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topics: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub sample_lag: usize,
    pub seed: u64,
    pub mapping: MappingMode,
    pub remap_on_test: bool,
    pub fit_hyperparams: bool,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub kmeans_restarts: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sampler = SamplerConfig::default();
        let km = KMeansConfig::default();
        Self {
            data: None,
            synthetic: None,
            window: 30,
            characters: 29,
            topics: None,
            alpha: None,
            beta: LdaHyperparams::DEFAULT_BETA,
            iterations: sampler.iterations,
            burn_in: sampler.burn_in,
            sample_lag: sampler.sample_lag,
            seed: 1,
            mapping: MappingMode::Greedy,
            remap_on_test: false,
            fit_hyperparams: false,
            kmeans_max_iter: km.max_iter,
            kmeans_tol: km.tol,
            kmeans_restarts: km.restarts,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| {
            CliError::new(
                Stage::Config,
                sensword::Error::Load {
                    path: path.to_path_buf(),
                    source,
                },
            )
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn window_config(&self) -> CliResult<WindowConfig> {
        WindowConfig::new(self.window).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            sample_lag: self.sample_lag,
        }
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
            restarts: self.kmeans_restarts,
        }
    }

    pub fn hyper_fit(&self) -> HyperFitConfig {
        HyperFitConfig {
            enabled: self.fit_hyperparams,
            ..HyperFitConfig::default()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.data.is_some() == self.synthetic.is_some() {
            return Err(CliError::config("exactly one of `data` and `synthetic` must be set"));
        }
        self.window_config()?;
        if self.characters < 2 {
            return Err(CliError::config("`characters` must be at least 2"));
        }
        if matches!(self.topics, Some(k) if k < 1) {
            return Err(CliError::config("`topics` must be positive"));
        }
        self.sampler().validate().stage(Stage::Config)?;
        Ok(())
    }

    /// Topic count: explicit, or the dataset's class count.
    pub fn resolve_topics(&self, dataset: &MultiSensorDataset) -> CliResult<usize> {
        match (self.topics, dataset.classes().len()) {
            (Some(k), _) => Ok(k),
            (None, 0) => Err(CliError::config("dataset has no labels; set `topics`")),
            (None, c) => Ok(c),
        }
    }

    /// Priors before any fitting: configured α (or 50/K) and β.
    pub fn base_hyperparams(&self, topics: usize) -> CliResult<LdaHyperparams> {
        let defaults = LdaHyperparams::with_defaults(topics);
        LdaHyperparams::new(topics, self.alpha.unwrap_or(defaults.alpha), self.beta).stage(Stage::Config)
    }

    pub fn load_split(&self, split: Split) -> CliResult<MultiSensorDataset> {
        match (&self.data, &self.synthetic) {
            (Some(root), None) => load_ucihar(root, split).stage(Stage::Ingest),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).map_err(|source| {
                    CliError::new(
                        Stage::Ingest,
                        sensword::Error::Load {
                            path: path.clone(),
                            source,
                        },
                    )
                })?;
                let synth = SyntheticConfig::from_toml(&text).stage(Stage::Config)?;
                generate_synthetic(&synth, synthetic_split_seed(synth.seed, split)).stage(Stage::Ingest)
            }
            _ => Err(CliError::config("exactly one of `data` and `synthetic` must be set")),
        }
    }

    /// The resolved configuration followed by the derived per-stage seeds as
    /// comments; the text loads back as a config file.
    pub fn run_log(&self, channels: &[ChannelKey], hp: Option<&LdaHyperparams>) -> String {
        let mut log = String::from("# resolved configuration\n");
        log.push_str(&self.to_toml());
        log.push_str("\n# derived seeds\n");
        for &ch in channels {
            log.push_str(&format!("# codebook.{ch} = {}\n", channel_seed(self.seed, ch)));
        }
        log.push_str(&format!("# gibbs = {}\n", derive_seed(self.seed, &[tag::GIBBS])));
        if self.fit_hyperparams {
            log.push_str(&format!("# hyperparams = {}\n", derive_seed(self.seed, &[tag::HYPER])));
        }
        log.push_str(&format!("# fold_in = derive({}, [{}, doc_id])\n", self.seed, tag::FOLD_IN));
        if let Some(hp) = hp {
            log.push_str(&format!(
                "\n# effective priors\n# topics = {}\n# alpha = {}\n# beta = {}\n",
                hp.topics, hp.alpha, hp.beta
            ));
        }
        log
    }
}

/// Train and test synthetic splits come from the same description with
/// different generator seeds.
pub fn synthetic_split_seed(seed: u64, split: Split) -> u64 {
    match split {
        Split::Train => seed,
        Split::Test => derive_seed(seed, &[1]),
    }
}
