//! Discover activity structure in multi-sensor time series.
//!
//! The pipeline discretizes every channel with a k-means codebook over
//! half-overlapping windows, joins the per-sensor characters of each axis
//! into sensory words, and fits an LDA topic model to the resulting bags of
//! words. Topics are then matched to labeled activities for evaluation.
//!
//! ```text
//! dataset ──► codebook ──► words ──► lda ──► eval
//! ```

pub mod codebook;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kmeans;
pub mod lda;
pub mod seed;
pub mod words;

pub use codebook::{extract_subsequences, train_codebooks, ChannelCodebook, CodebookSet, WindowConfig};
pub use dataset::{
    generate_synthetic, load_ucihar, ActivityLabel, Axis, ChannelKey, DataSequence, MultiSensorDataset, Sensor,
    Split, SyntheticConfig,
};
pub use error::{Error, Result};
pub use eval::{
    assign_classes, compute_report, corpus_statistics, map_topics, ContingencyMatrix, CorpusStats, EvalReport,
    MappingMode, TopicClassMapping,
};
pub use kmeans::KMeansConfig;
pub use lda::{fold_in, train, DocTopicDist, LdaHyperparams, LdaModel, SamplerConfig};
pub use words::{
    build_corpus, compose_words, remove_top_words, word_frequencies, BowCorpus, BowDocument, SensoryWord, Vocabulary,
};
