use std::fmt;

use thiserror::Error;

/// Pipeline stage an error surfaced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Codebook,
    Corpus,
    Topics,
    Inference,
    Evaluation,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Codebook => "codebook",
            Stage::Corpus => "corpus",
            Stage::Topics => "topics",
            Stage::Inference => "inference",
            Stage::Evaluation => "evaluation",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {source}")]
pub struct CliError {
    pub stage: Stage,
    #[source]
    pub source: sensword::Error,
}

impl CliError {
    pub fn new(stage: Stage, source: impl Into<sensword::Error>) -> Self {
        Self {
            stage,
            source: source.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Stage::Config, sensword::Error::Config(message.into()))
    }

    /// 1 usage/config, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        use sensword::Error as E;
        match &self.source {
            E::Config(_) | E::Range(_) | E::Mapping(_) => 1,
            E::Load { .. }
            | E::Parse { .. }
            | E::Consistency(_)
            | E::Window(_)
            | E::Training { .. }
            | E::Dimension { .. }
            | E::Composition(_)
            | E::Serde(_)
            | E::Io(_) => 2,
            E::Invariant(_) | E::Model(_) | E::Shape(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> CliResult<T>;
}

impl<T, E: Into<sensword::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> CliResult<T> {
        self.map_err(|e| CliError::new(stage, e))
    }
}
