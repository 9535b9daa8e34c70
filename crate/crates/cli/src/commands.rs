//! The subcommands, as library functions returning their results.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sensword::eval::build_mapping;
use sensword::{
    assign_classes, build_corpus, compute_report, remove_top_words, ActivityLabel, ContingencyMatrix, CorpusStats,
    DocTopicDist, EvalReport, MappingMode, Split,
};

use crate::bundle::{self, Bundle};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Stage, StageExt};
use crate::pipeline::{self, Applied, Fitted};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const STATS_JSON: &str = "stats.json";

/// Trains on the training split and writes the full bundle to `cfg.out`.
pub fn train(cfg: &RunConfig) -> CliResult<Fitted> {
    cfg.validate()?;
    let dataset = cfg.load_split(Split::Train)?;
    let fitted = pipeline::fit(cfg, &dataset)?;
    let out = &cfg.out;
    bundle::create_dir(out)?;
    bundle::write_model_files(out, &fitted.codebooks, &fitted.corpus.vocabulary, &fitted.model)?;
    if let Some(report) = &fitted.report {
        bundle::write_report(out, report)?;
    }
    bundle::write_theta(out, &fitted.theta, &fitted.corpus, fitted.mapping(), dataset.classes())?;
    bundle::write_word_freq(out, &fitted.corpus)?;
    let hp = fitted.model.hyperparams();
    bundle::write_text(out, bundle::RUN_LOG, &cfg.run_log(dataset.channel_keys(), Some(&hp)))?;
    Ok(fitted)
}

/// Folds `split` of the configured data source into the bundle at
/// `bundle_dir`, writing θ (and a report when labels exist) to `cfg.out`.
pub fn apply(cfg: &RunConfig, bundle_dir: &Path, split: Split) -> CliResult<Applied> {
    if cfg.data.is_some() == cfg.synthetic.is_some() {
        return Err(CliError::config("exactly one of `data` and `synthetic` must be set"));
    }
    ensure_separate(bundle_dir, &cfg.out)?;
    let loaded = Bundle::load(bundle_dir)?;
    let dataset = cfg.load_split(split)?;
    let applied = pipeline::apply(
        &loaded.codebooks,
        &loaded.vocabulary,
        &loaded.model,
        loaded.mapping(),
        cfg.mapping,
        cfg.remap_on_test,
        &dataset,
    )?;
    if applied.report.is_none() && applied.corpus.label_ids().is_some() {
        warn!("bundle has no topic-class mapping; skipping the report");
    }
    let out = &cfg.out;
    bundle::create_dir(out)?;
    let mapping = applied.report.as_ref().map(|r| &r.mapping).or(loaded.mapping());
    bundle::write_theta(out, &applied.theta, &applied.corpus, mapping, dataset.classes())?;
    if let Some(report) = &applied.report {
        bundle::write_report(out, report)?;
    }
    let hp = loaded.model.hyperparams();
    bundle::write_text(out, bundle::RUN_LOG, &cfg.run_log(dataset.channel_keys(), Some(&hp)))?;
    Ok(applied)
}

fn ensure_separate(bundle_dir: &Path, out: &Path) -> CliResult<()> {
    let same = match (fs::canonicalize(bundle_dir), fs::canonicalize(out)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        return Err(CliError::config(format!(
            "output directory {} is the bundle itself; choose another --out",
            out.display()
        )));
    }
    Ok(())
}

/// Scores a stored θ table (as written by `train` or `apply`) against its
/// `true_label` column, using the bundle's mapping or, with `remap`, one
/// learned from these labels.
pub fn evaluate(
    theta_csv: &Path,
    bundle_dir: &Path,
    mode: MappingMode,
    remap: bool,
    out: &Path,
) -> CliResult<EvalReport> {
    let loaded = Bundle::load(bundle_dir)?;
    let train_report = loaded
        .report
        .as_ref()
        .ok_or_else(|| CliError::config("bundle has no report.json; class names are unknown"))?;
    let classes: Vec<ActivityLabel> = train_report
        .per_class
        .iter()
        .enumerate()
        .map(|(id, m)| ActivityLabel {
            id,
            name: m.class.clone(),
        })
        .collect();
    let (theta, labels) = read_theta_csv(theta_csv, &classes, loaded.model.topics())?;
    let topics = assign_classes(&theta);
    let mapping = if remap {
        let contingency = ContingencyMatrix::from_assignments(&topics, &labels, theta.topics(), classes.len())
            .stage(Stage::Evaluation)?;
        build_mapping(&contingency, mode).stage(Stage::Evaluation)?
    } else {
        train_report.mapping.clone()
    };
    let report = compute_report(&topics, &labels, &mapping, &classes, None).stage(Stage::Evaluation)?;
    bundle::create_dir(out)?;
    bundle::write_report(out, &report)?;
    Ok(report)
}

fn read_theta_csv(path: &Path, classes: &[ActivityLabel], topics: usize) -> CliResult<(DocTopicDist, Vec<usize>)> {
    let parse_err = |row: usize, message: String| {
        CliError::new(
            Stage::Ingest,
            sensword::Error::Parse {
                path: path.to_path_buf(),
                row,
                message,
            },
        )
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
    let by_name: BTreeMap<&str, usize> = classes.iter().map(|c| (c.name.as_str(), c.id)).collect();
    let mut theta = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(row, e.to_string()))?;
        if record.len() != 3 + topics {
            return Err(parse_err(row, format!("expected {} columns, got {}", 3 + topics, record.len())));
        }
        let label = &record[1];
        let id = *by_name
            .get(label)
            .ok_or_else(|| parse_err(row, format!("unknown or missing true_label {label:?}")))?;
        let values = (3..record.len())
            .map(|i| record[i].parse::<f64>().map_err(|e| parse_err(row, e.to_string())))
            .collect::<CliResult<Vec<f64>>>()?;
        labels.push(id);
        theta.push(values);
    }
    Ok((DocTopicDist { theta }, labels))
}

/// Grid of the sweep: every `(window, characters)` cell is run once per
/// seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepGrid {
    pub windows: Vec<usize>,
    pub characters: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    pub fn new(windows: Vec<usize>, characters: Vec<usize>, seeds: Vec<u64>) -> CliResult<Self> {
        if windows.is_empty() || characters.is_empty() || seeds.is_empty() {
            return Err(CliError::config("sweep grid lists must be non-empty"));
        }
        for &p in &windows {
            sensword::WindowConfig::new(p).map_err(|e| CliError::config(e.to_string()))?;
        }
        if let Some(v) = characters.iter().find(|&&v| v < 2) {
            return Err(CliError::config(format!("characters must be at least 2, got {v}")));
        }
        Ok(Self {
            windows,
            characters,
            seeds,
        })
    }

    fn cells(&self) -> Vec<(usize, usize, u64)> {
        let mut cells = Vec::new();
        for &p in &self.windows {
            for &v in &self.characters {
                for &s in &self.seeds {
                    cells.push((p, v, s));
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: usize,
    pub v: usize,
    pub seed: u64,
    pub train_f1: Option<f64>,
    pub test_f1: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn key(&self) -> (usize, usize, u64) {
        (self.p, self.v, self.seed)
    }
}

/// Runs train and test for every grid cell into `<out>/sweep.csv`. Rows
/// already present in that file are kept and their cells skipped; a failing
/// cell is recorded with its error and the sweep continues.
pub fn sweep(cfg: &RunConfig, grid: &SweepGrid) -> CliResult<Vec<SweepRow>> {
    cfg.validate()?;
    let train_ds = cfg.load_split(Split::Train)?;
    let test_ds = cfg.load_split(Split::Test)?;
    bundle::create_dir(&cfg.out)?;
    bundle::write_text(&cfg.out, bundle::RUN_LOG, &cfg.run_log(train_ds.channel_keys(), None))?;
    let path = cfg.out.join(SWEEP_CSV);
    let existing = read_rows::<SweepRow>(&path)?;
    let done: BTreeSet<_> = existing.iter().map(SweepRow::key).collect();
    let todo: Vec<_> = grid.cells().into_iter().filter(|c| !done.contains(c)).collect();
    info!("sweep: {} cells to run, {} already done", todo.len(), done.len());

    let sink = Mutex::new(RowSink::open(&path, existing.is_empty())?);
    let fresh: Vec<SweepRow> = todo
        .par_iter()
        .map(|&(p, v, seed)| {
            let cell = RunConfig {
                window: p,
                characters: v,
                seed,
                ..cfg.clone()
            };
            let row = match run_cell(&cell, &train_ds, &test_ds) {
                Ok((train_f1, test_f1)) => SweepRow {
                    p,
                    v,
                    seed,
                    train_f1: Some(train_f1),
                    test_f1: Some(test_f1),
                    error: None,
                },
                Err(e) => {
                    warn!("cell p = {p}, v = {v}, seed = {seed} failed: {e}");
                    SweepRow {
                        p,
                        v,
                        seed,
                        train_f1: None,
                        test_f1: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            sink.lock().expect("sink lock").push(&row)?;
            Ok(row)
        })
        .collect::<CliResult<_>>()?;

    let mut rows = existing;
    rows.extend(fresh);
    rows.sort_by_key(SweepRow::key);
    write_rows(&path, &rows)?;
    Ok(rows)
}

fn run_cell(
    cfg: &RunConfig,
    train_ds: &sensword::MultiSensorDataset,
    test_ds: &sensword::MultiSensorDataset,
) -> CliResult<(f64, f64)> {
    let fitted = pipeline::fit(cfg, train_ds)?;
    let train_report = fitted
        .report
        .as_ref()
        .ok_or_else(|| CliError::config("training data has no labels"))?;
    let applied = pipeline::apply(
        &fitted.codebooks,
        &fitted.corpus.vocabulary,
        &fitted.model,
        Some(&train_report.mapping),
        cfg.mapping,
        cfg.remap_on_test,
        test_ds,
    )?;
    let test_report = applied.report.ok_or_else(|| CliError::config("test data has no labels"))?;
    Ok((train_report.macro_f1, test_report.macro_f1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub n_removed: usize,
    pub train_f1: f64,
    pub test_f1: f64,
}

/// Retrains the topic model after removing the `n` most frequent training
/// words, for each `n`. Codebooks are trained once (or taken from
/// `bundle_dir`) and shared by every row.
pub fn ablate(cfg: &RunConfig, removals: &[usize], bundle_dir: Option<&Path>) -> CliResult<Vec<AblationRow>> {
    cfg.validate()?;
    if removals.is_empty() {
        return Err(CliError::config("no removal counts given"));
    }
    let train_ds = cfg.load_split(Split::Train)?;
    let test_ds = cfg.load_split(Split::Test)?;
    let codebooks = match bundle_dir {
        Some(dir) => Bundle::load(dir)?.codebooks,
        None => pipeline::fit_codebooks(cfg, &train_ds)?,
    };
    pipeline::check_channels(&codebooks, &train_ds)?;
    pipeline::check_channels(&codebooks, &test_ds)?;
    let full_train = build_corpus(&train_ds, &codebooks, None).stage(Stage::Corpus)?;
    let full_test = build_corpus(&test_ds, &codebooks, Some(&full_train.vocabulary)).stage(Stage::Corpus)?;
    let v = full_train.vocabulary.len();
    if let Some(n) = removals.iter().find(|&&n| n > v) {
        return Err(CliError::new(
            Stage::Config,
            sensword::Error::Range(format!("cannot remove {n} words from a vocabulary of {v}")),
        ));
    }

    let rows = removals
        .par_iter()
        .map(|&n| {
            let train_corpus = remove_top_words(&full_train, n).stage(Stage::Corpus)?;
            let test_corpus = full_test.retain_vocabulary(&train_corpus.vocabulary);
            let fitted = pipeline::fit_corpus(cfg, &train_ds, codebooks.clone(), train_corpus)?;
            let train_report = fitted
                .report
                .as_ref()
                .ok_or_else(|| CliError::config("training data has no labels"))?;
            let applied = pipeline::apply_corpus(
                &fitted.model,
                Some(&train_report.mapping),
                cfg.mapping,
                cfg.remap_on_test,
                &test_ds,
                test_corpus,
            )?;
            let test_report = applied.report.ok_or_else(|| CliError::config("test data has no labels"))?;
            info!("removed {n}: train F1 {:.4}, test F1 {:.4}", train_report.macro_f1, test_report.macro_f1);
            Ok(AblationRow {
                n_removed: n,
                train_f1: train_report.macro_f1,
                test_f1: test_report.macro_f1,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    bundle::create_dir(&cfg.out)?;
    bundle::write_text(&cfg.out, bundle::RUN_LOG, &cfg.run_log(train_ds.channel_keys(), None))?;
    write_rows(&cfg.out.join(ABLATION_CSV), &rows)?;
    Ok(rows)
}

/// Corpus statistics of the training split; also writes the word
/// frequency table.
pub fn stats(cfg: &RunConfig, bundle_dir: Option<&Path>) -> CliResult<CorpusStats> {
    if cfg.data.is_some() == cfg.synthetic.is_some() {
        return Err(CliError::config("exactly one of `data` and `synthetic` must be set"));
    }
    let dataset = cfg.load_split(Split::Train)?;
    let (codebooks, vocab) = match bundle_dir {
        Some(dir) => {
            let b = Bundle::load(dir)?;
            (b.codebooks, Some(b.vocabulary))
        }
        None => {
            cfg.validate()?;
            (pipeline::fit_codebooks(cfg, &dataset)?, None)
        }
    };
    pipeline::check_channels(&codebooks, &dataset)?;
    let corpus = build_corpus(&dataset, &codebooks, vocab.as_ref()).stage(Stage::Corpus)?;
    let topics = cfg.resolve_topics(&dataset)?;
    let stats = sensword::corpus_statistics(&corpus, topics);
    bundle::create_dir(&cfg.out)?;
    bundle::write_text(
        &cfg.out,
        STATS_JSON,
        &serde_json::to_string_pretty(&stats).stage(Stage::Output)?,
    )?;
    bundle::write_word_freq(&cfg.out, &corpus)?;
    bundle::write_text(&cfg.out, bundle::RUN_LOG, &cfg.run_log(dataset.channel_keys(), None))?;
    Ok(stats)
}

struct RowSink {
    file: fs::File,
    header: bool,
}

impl RowSink {
    fn open(path: &Path, fresh: bool) -> CliResult<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(!fresh)
            .write(true)
            .truncate(fresh)
            .open(path)
            .stage(Stage::Output)?;
        Ok(Self { file, header: fresh })
    }

    fn push<T: Serialize>(&mut self, row: &T) -> CliResult<()> {
        let mut w = csv::WriterBuilder::new().has_headers(self.header).from_writer(Vec::new());
        w.serialize(row).map_err(csv_err)?;
        let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
        self.file.write_all(&bytes).stage(Stage::Output)?;
        self.file.flush().stage(Stage::Output)?;
        self.header = false;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::new(Stage::Output, sensword::Error::Serde(e.to_string()))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader
        .deserialize()
        .enumerate()
        .map(|(row, r)| {
            r.map_err(|e| {
                CliError::new(
                    Stage::Ingest,
                    sensword::Error::Parse {
                        path: path.to_path_buf(),
                        row,
                        message: e.to_string(),
                    },
                )
            })
        })
        .collect()
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().stage(Stage::Output)
}
