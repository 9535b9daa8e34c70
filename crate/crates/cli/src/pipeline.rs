//! Pipeline stages shared by the subcommands.

use log::info;
use sensword::eval::build_mapping;
use sensword::lda::{fit_hyperparams, fold_in_corpus};
use sensword::{
    assign_classes, build_corpus, compute_report, corpus_statistics, train, train_codebooks, BowCorpus, CodebookSet,
    ContingencyMatrix, CorpusStats, DocTopicDist, EvalReport, LdaHyperparams, LdaModel, MappingMode,
    MultiSensorDataset, TopicClassMapping, Vocabulary,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Stage, StageExt};

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub codebooks: CodebookSet,
    pub corpus: BowCorpus,
    pub model: LdaModel,
    /// Fold-in mixtures of the training documents.
    pub theta: DocTopicDist,
    pub report: Option<EvalReport>,
}

impl Fitted {
    pub fn mapping(&self) -> Option<&TopicClassMapping> {
        self.report.as_ref().map(|r| &r.mapping)
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_statistics(&self.corpus, self.model.topics())
    }
}

/// Mixtures and (when labels exist) a report for a corpus scored against a
/// trained model.
#[derive(Debug, Clone)]
pub struct Applied {
    pub corpus: BowCorpus,
    pub theta: DocTopicDist,
    pub report: Option<EvalReport>,
}

pub fn fit_codebooks(cfg: &RunConfig, dataset: &MultiSensorDataset) -> CliResult<CodebookSet> {
    info!("training codebooks: p = {}, v = {}", cfg.window, cfg.characters);
    train_codebooks(dataset, cfg.window_config()?, cfg.characters, &cfg.kmeans(), cfg.seed).stage(Stage::Codebook)
}

/// Full training run: codebooks, corpus, topics, and the training report.
pub fn fit(cfg: &RunConfig, dataset: &MultiSensorDataset) -> CliResult<Fitted> {
    let codebooks = fit_codebooks(cfg, dataset)?;
    let corpus = build_corpus(dataset, &codebooks, None).stage(Stage::Corpus)?;
    fit_corpus(cfg, dataset, codebooks, corpus)
}

/// Training from an existing codebook set and corpus.
pub fn fit_corpus(
    cfg: &RunConfig,
    dataset: &MultiSensorDataset,
    codebooks: CodebookSet,
    corpus: BowCorpus,
) -> CliResult<Fitted> {
    let topics = cfg.resolve_topics(dataset)?;
    let hp = resolve_hyperparams(cfg, &corpus, topics)?;
    info!(
        "training LDA: D = {}, V = {}, K = {}, alpha = {}, beta = {}",
        corpus.len(),
        corpus.vocabulary.len(),
        hp.topics,
        hp.alpha,
        hp.beta
    );
    let (model, _) = train(&corpus, hp, &cfg.sampler(), cfg.seed).stage(Stage::Topics)?;
    // Training documents are scored through the same fold-in path as unseen
    // data, so applying a bundle to its own training split reproduces this
    // report.
    let theta = fold_in_corpus(&model, &corpus, &cfg.sampler(), cfg.seed).stage(Stage::Inference)?;
    let stats = corpus_statistics(&corpus, topics);
    let report = match corpus.label_ids() {
        Some(labels) => {
            let mapping = learn_mapping(&theta, &labels, dataset.classes().len(), cfg.mapping)?;
            Some(report_for(&theta, &labels, &mapping, dataset, Some(stats))?)
        }
        None => None,
    };
    Ok(Fitted {
        codebooks,
        corpus,
        model,
        theta,
        report,
    })
}

fn resolve_hyperparams(cfg: &RunConfig, corpus: &BowCorpus, topics: usize) -> CliResult<LdaHyperparams> {
    let base = cfg.base_hyperparams(topics)?;
    if !cfg.fit_hyperparams {
        return Ok(base);
    }
    let fitted = fit_hyperparams(corpus, topics, cfg.seed, &cfg.hyper_fit()).stage(Stage::Topics)?;
    info!("fitted priors: alpha = {}, beta = {}", fitted.alpha, fitted.beta);
    Ok(fitted)
}

pub fn learn_mapping(
    theta: &DocTopicDist,
    labels: &[usize],
    classes: usize,
    mode: MappingMode,
) -> CliResult<TopicClassMapping> {
    let topics = assign_classes(theta);
    let contingency = ContingencyMatrix::from_assignments(&topics, labels, theta.topics(), classes)
        .stage(Stage::Evaluation)?;
    build_mapping(&contingency, mode).stage(Stage::Evaluation)
}

pub fn report_for(
    theta: &DocTopicDist,
    labels: &[usize],
    mapping: &TopicClassMapping,
    dataset: &MultiSensorDataset,
    stats: Option<CorpusStats>,
) -> CliResult<EvalReport> {
    compute_report(&assign_classes(theta), labels, mapping, dataset.classes(), stats).stage(Stage::Evaluation)
}

/// Rejects data whose channels differ from the ones the codebooks were
/// trained on.
pub fn check_channels(codebooks: &CodebookSet, dataset: &MultiSensorDataset) -> CliResult<()> {
    let trained: Vec<_> = codebooks.channels().collect();
    if trained != dataset.channel_keys() {
        let show = |keys: &[sensword::ChannelKey]| keys.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        return Err(CliError::new(
            Stage::Corpus,
            sensword::Error::Composition(format!(
                "data channels [{}] do not match codebook channels [{}]",
                show(dataset.channel_keys()),
                show(&trained)
            )),
        ));
    }
    Ok(())
}

/// Fold-in of a new dataset against trained artifacts. The report uses
/// `mapping` when given, or a mapping learned on this data's own labels when
/// `remap` is set.
pub fn apply(
    codebooks: &CodebookSet,
    vocabulary: &Vocabulary,
    model: &LdaModel,
    mapping: Option<&TopicClassMapping>,
    mode: MappingMode,
    remap: bool,
    dataset: &MultiSensorDataset,
) -> CliResult<Applied> {
    check_channels(codebooks, dataset)?;
    let corpus = build_corpus(dataset, codebooks, Some(vocabulary)).stage(Stage::Corpus)?;
    apply_corpus(model, mapping, mode, remap, dataset, corpus)
}

pub fn apply_corpus(
    model: &LdaModel,
    mapping: Option<&TopicClassMapping>,
    mode: MappingMode,
    remap: bool,
    dataset: &MultiSensorDataset,
    corpus: BowCorpus,
) -> CliResult<Applied> {
    if corpus.oov_total() > 0 {
        info!(
            "{} of {} tokens are out of vocabulary",
            corpus.oov_total(),
            corpus.oov_total() + corpus.n_tokens()
        );
    }
    let theta = fold_in_corpus(model, &corpus, &model.sampler(), model.seed()).stage(Stage::Inference)?;
    let report = match corpus.label_ids() {
        Some(labels) => {
            let learned;
            let mapping = if remap {
                learned = learn_mapping(&theta, &labels, dataset.classes().len(), mode)?;
                Some(&learned)
            } else {
                mapping
            };
            match mapping {
                Some(m) => {
                    let stats = corpus_statistics(&corpus, model.topics());
                    Some(report_for(&theta, &labels, m, dataset, Some(stats))?)
                }
                None => None,
            }
        }
        None => None,
    };
    Ok(Applied { corpus, theta, report })
}
