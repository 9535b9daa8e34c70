//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sensword::{MappingMode, Split};

use crate::commands::{self, SweepGrid};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "sensword", version, about = "Activity discovery with sensory words and topic models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub common: Common,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Debug, Default, Args)]
pub struct Common {
    /// Config file (flat TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// UCI-HAR dataset root.
    #[arg(long, global = true, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Synthetic dataset description (TOML).
    #[arg(long, global = true)]
    pub synthetic: Option<PathBuf>,
    /// Window size.
    #[arg(short = 'p', long = "window", global = true)]
    pub window: Option<usize>,
    /// Characters per channel codebook.
    #[arg(short = 'v', long = "characters", global = true)]
    pub characters: Option<usize>,
    /// Number of topics.
    #[arg(short = 'k', long = "topics", global = true)]
    pub topics: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long = "iters", global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    #[arg(long, global = true)]
    pub sample_lag: Option<usize>,
    /// Topic-to-class mapping: greedy or optimal.
    #[arg(long, global = true)]
    pub mapping: Option<MappingMode>,
    /// Learn the topic-to-class mapping on the evaluated split's own labels.
    #[arg(long, global = true)]
    pub remap_on_test: bool,
    /// Estimate alpha and beta from the training corpus.
    #[arg(long, global = true)]
    pub fit_hyperparams: bool,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub show_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train codebooks and topics on the training split and write a bundle.
    Train,
    /// Infer topic mixtures for a split with a trained bundle.
    Apply {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Score a stored theta table against its true labels.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        theta: PathBuf,
    },
    /// Train and test over a grid of window sizes and codebook sizes.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [10, 15, 20, 25, 30, 35])]
        windows: Vec<usize>,
        #[arg(long = "chars", value_delimiter = ',', default_values_t = [8, 11, 14, 17, 20, 23, 26, 29])]
        characters: Vec<usize>,
        /// Runs per cell, with seeds `seed`, `seed + 1`, ...
        #[arg(long, default_value_t = 1)]
        repeats: u64,
    },
    /// Retrain after removing the most frequent words.
    Ablate {
        #[arg(long, value_delimiter = ',', default_values_t = [0, 5, 10, 15, 20])]
        remove: Vec<usize>,
        /// Reuse this bundle's codebooks.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Corpus statistics and word frequencies of the training split.
    Stats {
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

impl Common {
    /// Config file values (or defaults) with flags applied on top.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.data.is_some() {
            cfg.data = self.data.clone();
            cfg.synthetic = None;
        }
        if self.synthetic.is_some() {
            cfg.synthetic = self.synthetic.clone();
            cfg.data = None;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        set!(seed => seed, out => out, window => window, characters => characters, beta => beta,
             iterations => iterations, burn_in => burn_in, sample_lag => sample_lag, mapping => mapping);
        if self.topics.is_some() {
            cfg.topics = self.topics;
        }
        if self.alpha.is_some() {
            cfg.alpha = self.alpha;
        }
        cfg.remap_on_test |= self.remap_on_test;
        cfg.fit_hyperparams |= self.fit_hyperparams;
        Ok(cfg)
    }
}

/// Executes a parsed command line; returns the text to print.
pub fn run(cli: &Cli) -> CliResult<String> {
    let cfg = cli.common.resolve()?;
    if cli.common.show_config {
        return Ok(cfg.to_toml());
    }
    let command = cli
        .command
        .as_ref()
        .ok_or_else(|| CliError::config("no subcommand given; see --help"))?;
    Ok(match command {
        Command::Train => {
            let fitted = commands::train(&cfg)?;
            match &fitted.report {
                Some(r) => format!("train macro F1 {:.4}\nbundle written to {}", r.macro_f1, cfg.out.display()),
                None => format!("bundle written to {}", cfg.out.display()),
            }
        }
        Command::Apply { bundle, split } => {
            let applied = commands::apply(&cfg, bundle, *split)?;
            match &applied.report {
                Some(r) => format!("{} macro F1 {:.4}", split.as_str(), r.macro_f1),
                None => format!("theta for {} documents written to {}", applied.theta.len(), cfg.out.display()),
            }
        }
        Command::Evaluate { bundle, theta } => {
            let report = commands::evaluate(theta, bundle, cfg.mapping, cfg.remap_on_test, &cfg.out)?;
            format!("macro F1 {:.4}", report.macro_f1)
        }
        Command::Sweep {
            windows,
            characters,
            repeats,
        } => {
            let seeds = (0..*repeats).map(|r| cfg.seed.wrapping_add(r)).collect();
            let grid = SweepGrid::new(windows.clone(), characters.clone(), seeds)?;
            let rows = commands::sweep(&cfg, &grid)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            format!(
                "{} sweep rows ({failed} failed) in {}",
                rows.len(),
                cfg.out.join(commands::SWEEP_CSV).display()
            )
        }
        Command::Ablate { remove, bundle } => {
            let rows = commands::ablate(&cfg, remove, bundle.as_deref())?;
            rows.iter()
                .map(|r| format!("n={} train F1 {:.4} test F1 {:.4}", r.n_removed, r.train_f1, r.test_f1))
                .collect::<Vec<_>>()
                .join("\n")
        }
        Command::Stats { bundle } => {
            let s = commands::stats(&cfg, bundle.as_deref())?;
            format!("D {}\nN {}\nB {}\nV {}\nK {}", s.d, s.n, s.b, s.v, s.k)
        }
    })
}
