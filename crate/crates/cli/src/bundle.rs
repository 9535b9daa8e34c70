//! Artifact bundle: the fixed-name files a run leaves in its output
//! directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sensword::eval::{write_confusion_csv, write_theta_csv, write_word_frequency_csv};
use sensword::{ActivityLabel, BowCorpus, CodebookSet, DocTopicDist, EvalReport, LdaModel, TopicClassMapping, Vocabulary};

use crate::error::{CliError, CliResult, Stage, StageExt};

pub const CODEBOOKS: &str = "codebooks.json";
pub const VOCAB: &str = "vocab.json";
pub const MODEL: &str = "model.json";
pub const REPORT: &str = "report.json";
pub const CONFUSION: &str = "confusion.csv";
pub const THETA: &str = "theta.csv";
pub const RUN_LOG: &str = "run.log";
pub const WORD_FREQ: &str = "word_freq.csv";

/// Trained artifacts loaded back from a directory.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub codebooks: CodebookSet,
    pub vocabulary: Vocabulary,
    pub model: LdaModel,
    /// Training report; absent when the training data had no labels.
    pub report: Option<EvalReport>,
}

impl Bundle {
    pub fn mapping(&self) -> Option<&TopicClassMapping> {
        self.report.as_ref().map(|r| &r.mapping)
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let codebooks = CodebookSet::from_json(&read(dir, CODEBOOKS)?).stage(Stage::Ingest)?;
        let vocabulary = Vocabulary::from_json(&read(dir, VOCAB)?).stage(Stage::Ingest)?;
        let model = LdaModel::from_json(&read(dir, MODEL)?).stage(Stage::Ingest)?;
        if model.vocabulary_hash() != vocabulary.fingerprint() {
            return Err(CliError::new(
                Stage::Ingest,
                sensword::Error::Model(format!("{MODEL} was not trained on {VOCAB}")),
            ));
        }
        let report = if dir.join(REPORT).exists() {
            Some(serde_json::from_str(&read(dir, REPORT)?).stage(Stage::Ingest)?)
        } else {
            None
        };
        Ok(Self {
            codebooks,
            vocabulary,
            model,
            report,
        })
    }
}

pub fn read(dir: &Path, name: &str) -> CliResult<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|source| CliError::new(Stage::Ingest, sensword::Error::Load { path, source }))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).stage(Stage::Output)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).stage(Stage::Output)?;
    Ok(path)
}

fn with_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> sensword::Result<()>,
) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(dir.join(name)).stage(Stage::Output)?);
    body(&mut out).stage(Stage::Output)?;
    out.flush().stage(Stage::Output)
}

pub fn write_model_files(dir: &Path, codebooks: &CodebookSet, vocabulary: &Vocabulary, model: &LdaModel) -> CliResult<()> {
    write_text(dir, CODEBOOKS, &codebooks.to_json().stage(Stage::Output)?)?;
    write_text(dir, VOCAB, &vocabulary.to_json().stage(Stage::Output)?)?;
    write_text(dir, MODEL, &model.to_json().stage(Stage::Output)?)?;
    Ok(())
}

/// Writes `report.json` and `confusion.csv`.
pub fn write_report(dir: &Path, report: &EvalReport) -> CliResult<()> {
    let json = serde_json::to_string_pretty(report).stage(Stage::Output)?;
    write_text(dir, REPORT, &json)?;
    with_file(dir, CONFUSION, |out| write_confusion_csv(report, out))
}

pub fn write_theta(
    dir: &Path,
    theta: &DocTopicDist,
    corpus: &BowCorpus,
    mapping: Option<&TopicClassMapping>,
    classes: &[ActivityLabel],
) -> CliResult<()> {
    let labels = corpus.label_ids();
    with_file(dir, THETA, |out| write_theta_csv(theta, labels.as_deref(), mapping, classes, out))
}

pub fn write_word_freq(dir: &Path, corpus: &BowCorpus) -> CliResult<()> {
    with_file(dir, WORD_FREQ, |out| write_word_frequency_csv(corpus, out))
}
