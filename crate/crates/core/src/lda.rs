//! Latent Dirichlet Allocation with collapsed Gibbs sampling.
//!
//! Training resamples every token's topic from
//!
//! ```text
//! p(z_i = k | z_-i, w) ∝ (n_dk + α) · (n_kw + β) / (n_k + V·β)
//! ```
//!
//! with all counts excluding token `i`. Fold-in runs the same update on a
//! single unseen document while the topic–word counts stay frozen, which
//! reduces the last two factors to the trained `φ[k][w]`.

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, tag, SeedRng};
use crate::words::{BowCorpus, BowDocument};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaHyperparams {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl LdaHyperparams {
    pub const DEFAULT_BETA: f64 = 0.01;

    pub fn new(topics: usize, alpha: f64, beta: f64) -> Result<Self> {
        let hp = Self { topics, alpha, beta };
        hp.validate()?;
        Ok(hp)
    }

    /// `α = 50 / K`, `β = 0.01`.
    pub fn with_defaults(topics: usize) -> Self {
        Self {
            topics,
            alpha: 50.0 / topics.max(1) as f64,
            beta: Self::DEFAULT_BETA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics < 1 {
            return Err(Error::Config("topic count must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "priors must be positive and finite (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// 0 estimates from the final state; otherwise counts are averaged over
    /// every `sample_lag`-th sweep after burn-in.
    pub sample_lag: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            burn_in: 500,
            sample_lag: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }

    fn is_sample(&self, iteration: usize) -> bool {
        self.sample_lag > 0 && iteration > self.burn_in && (iteration - self.burn_in).is_multiple_of(self.sample_lag)
    }
}

/// Topic assignments and count tables of a running chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    topics: usize,
    vocab_size: usize,
    words: Vec<usize>,
    doc_offsets: Vec<usize>,
    assignments: Vec<usize>,
    doc_topic: Vec<u32>,
    topic_word: Vec<u32>,
    topic_totals: Vec<u32>,
}

impl GibbsState {
    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn num_docs(&self) -> usize {
        self.doc_offsets.len() - 1
    }

    pub fn num_tokens(&self) -> usize {
        self.words.len()
    }

    pub fn doc_assignments(&self, d: usize) -> &[usize] {
        &self.assignments[self.doc_offsets[d]..self.doc_offsets[d + 1]]
    }

    pub fn doc_topic(&self, d: usize) -> &[u32] {
        &self.doc_topic[d * self.topics..(d + 1) * self.topics]
    }

    pub fn topic_word(&self, k: usize) -> &[u32] {
        &self.topic_word[k * self.vocab_size..(k + 1) * self.vocab_size]
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.topic_totals
    }

    /// Recounts every table from the assignments and checks the marginal
    /// identities between them.
    pub fn check_conservation(&self) -> Result<()> {
        let (k_n, v_n) = (self.topics, self.vocab_size);
        let mut doc_topic = vec![0u32; self.doc_topic.len()];
        let mut topic_word = vec![0u32; self.topic_word.len()];
        for d in 0..self.num_docs() {
            for i in self.doc_offsets[d]..self.doc_offsets[d + 1] {
                let k = self.assignments[i];
                if k >= k_n {
                    return Err(Error::Invariant(format!("topic {k} out of range")));
                }
                doc_topic[d * k_n + k] += 1;
                topic_word[k * v_n + self.words[i]] += 1;
            }
            let len = (self.doc_offsets[d + 1] - self.doc_offsets[d]) as u64;
            let sum: u64 = self.doc_topic(d).iter().map(|&c| u64::from(c)).sum();
            if sum != len {
                return Err(Error::Invariant(format!("document {d}: topic counts sum to {sum}, length {len}")));
            }
        }
        if doc_topic != self.doc_topic || topic_word != self.topic_word {
            return Err(Error::Invariant("count tables disagree with assignments".into()));
        }
        for k in 0..k_n {
            let sum: u64 = self.topic_word(k).iter().map(|&c| u64::from(c)).sum();
            if sum != u64::from(self.topic_totals[k]) {
                return Err(Error::Invariant(format!("topic {k}: word counts sum to {sum}, total {}", self.topic_totals[k])));
            }
        }
        let total: u64 = self.topic_totals.iter().map(|&c| u64::from(c)).sum();
        if total != self.words.len() as u64 {
            return Err(Error::Invariant(format!("topic totals sum to {total}, corpus has {}", self.words.len())));
        }
        Ok(())
    }
}

/// A single collapsed Gibbs chain over a corpus.
pub struct GibbsSampler {
    hp: LdaHyperparams,
    state: GibbsState,
    rng: SeedRng,
    weights: Vec<f64>,
}

impl GibbsSampler {
    /// Assigns every token a uniformly random topic.
    pub fn new(corpus: &BowCorpus, hp: LdaHyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        if corpus.is_empty() {
            return Err(Error::Model("cannot train on an empty corpus".into()));
        }
        let vocab_size = corpus.vocabulary.len();
        let k_n = hp.topics;
        let mut rng = rng_from(derive_seed(seed, &[tag::GIBBS]));
        let mut words = Vec::with_capacity(corpus.n_tokens());
        let mut doc_offsets = Vec::with_capacity(corpus.len() + 1);
        doc_offsets.push(0);
        for doc in &corpus.documents {
            if let Some(&bad) = doc.tokens.iter().find(|&&t| t >= vocab_size) {
                return Err(Error::Model(format!("token id {bad} outside vocabulary of {vocab_size}")));
            }
            words.extend_from_slice(&doc.tokens);
            doc_offsets.push(words.len());
        }
        let mut state = GibbsState {
            topics: k_n,
            vocab_size,
            assignments: Vec::with_capacity(words.len()),
            doc_topic: vec![0; corpus.len() * k_n],
            topic_word: vec![0; k_n * vocab_size],
            topic_totals: vec![0; k_n],
            words,
            doc_offsets,
        };
        for d in 0..state.num_docs() {
            for i in state.doc_offsets[d]..state.doc_offsets[d + 1] {
                let k = rng.random_range(0..k_n);
                state.assignments.push(k);
                state.doc_topic[d * k_n + k] += 1;
                state.topic_word[k * vocab_size + state.words[i]] += 1;
                state.topic_totals[k] += 1;
            }
        }
        Ok(Self {
            hp,
            state,
            rng,
            weights: vec![0.0; k_n],
        })
    }

    pub fn state(&self) -> &GibbsState {
        &self.state
    }

    pub fn hyperparams(&self) -> LdaHyperparams {
        self.hp
    }

    /// Changes α and β for subsequent sweeps; the topic count is fixed.
    pub fn set_priors(&mut self, alpha: f64, beta: f64) -> Result<()> {
        let hp = LdaHyperparams::new(self.hp.topics, alpha, beta)?;
        self.hp = hp;
        Ok(())
    }

    /// Resamples every token once, documents and tokens in order.
    pub fn sweep(&mut self) {
        let (alpha, beta) = (self.hp.alpha, self.hp.beta);
        let s = &mut self.state;
        let (k_n, v_n) = (s.topics, s.vocab_size);
        let v_beta = v_n as f64 * beta;
        for d in 0..s.doc_offsets.len() - 1 {
            let nd = &mut s.doc_topic[d * k_n..(d + 1) * k_n];
            for i in s.doc_offsets[d]..s.doc_offsets[d + 1] {
                let w = s.words[i];
                let old = s.assignments[i];
                nd[old] -= 1;
                s.topic_word[old * v_n + w] -= 1;
                s.topic_totals[old] -= 1;

                let mut total = 0.0;
                for (k, &ndk) in nd.iter().enumerate() {
                    let p = (f64::from(ndk) + alpha) * (f64::from(s.topic_word[k * v_n + w]) + beta)
                        / (f64::from(s.topic_totals[k]) + v_beta);
                    total += p;
                    self.weights[k] = total;
                }
                let new = sample_cumulative(&self.weights, total, &mut self.rng);

                s.assignments[i] = new;
                nd[new] += 1;
                s.topic_word[new * v_n + w] += 1;
                s.topic_totals[new] += 1;
            }
        }
        debug_assert!(self.state.check_conservation().is_ok());
    }
}

fn sample_cumulative(cumulative: &[f64], total: f64, rng: &mut SeedRng) -> usize {
    let u = rng.random::<f64>() * total;
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Per-document topic mixtures, one row of length `K` per document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTopicDist {
    pub theta: Vec<Vec<f64>>,
}

impl DocTopicDist {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn topics(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }
}

fn theta_row(counts: impl Iterator<Item = f64>, doc_len: f64, topics: usize, alpha: f64) -> Vec<f64> {
    let denom = doc_len + topics as f64 * alpha;
    counts.map(|c| (c + alpha) / denom).collect()
}

/// A trained model: priors plus the topic–word counts `φ` derives from.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    hyperparams: LdaHyperparams,
    vocab_size: usize,
    vocabulary_hash: String,
    topic_word: Vec<f64>,
    topic_totals: Vec<f64>,
    phi: Vec<f64>,
    sampler: SamplerConfig,
    seed: u64,
}

impl LdaModel {
    fn from_counts(
        hyperparams: LdaHyperparams,
        vocab_size: usize,
        vocabulary_hash: String,
        topic_word: Vec<f64>,
        sampler: SamplerConfig,
        seed: u64,
    ) -> Result<Self> {
        hyperparams.validate()?;
        let k_n = hyperparams.topics;
        if topic_word.len() != k_n * vocab_size {
            return Err(Error::Shape(format!(
                "topic-word table has {} cells, expected {k_n}x{vocab_size}",
                topic_word.len()
            )));
        }
        let topic_totals: Vec<f64> = if vocab_size == 0 {
            vec![0.0; k_n]
        } else {
            topic_word.chunks_exact(vocab_size).map(|r| r.iter().sum()).collect()
        };
        let beta = hyperparams.beta;
        let v_beta = vocab_size as f64 * beta;
        let phi = topic_word
            .iter()
            .enumerate()
            .map(|(i, &c)| (c + beta) / (topic_totals[i / vocab_size] + v_beta))
            .collect();
        Ok(Self {
            hyperparams,
            vocab_size,
            vocabulary_hash,
            topic_word,
            topic_totals,
            phi,
            sampler,
            seed,
        })
    }

    pub fn hyperparams(&self) -> LdaHyperparams {
        self.hyperparams
    }

    pub fn topics(&self) -> usize {
        self.hyperparams.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocabulary_hash(&self) -> &str {
        &self.vocabulary_hash
    }

    pub fn sampler(&self) -> SamplerConfig {
        self.sampler
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Topic–word distribution of topic `k`, a probability vector over `V`.
    pub fn phi(&self, k: usize) -> &[f64] {
        &self.phi[k * self.vocab_size..(k + 1) * self.vocab_size]
    }

    pub fn topic_word_counts(&self, k: usize) -> &[f64] {
        &self.topic_word[k * self.vocab_size..(k + 1) * self.vocab_size]
    }

    pub fn topic_totals(&self) -> &[f64] {
        &self.topic_totals
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let hp = file.hyperparams;
        hp.validate()?;
        let mut table = vec![0.0; hp.topics * file.vocab_size];
        for &(k, w, c) in &file.topic_word {
            if k >= hp.topics || w >= file.vocab_size || c.is_nan() || c < 0.0 {
                return Err(Error::Serde(format!("bad topic-word entry ({k}, {w}, {c})")));
            }
            table[k * file.vocab_size + w] = c;
        }
        let model = Self::from_counts(hp, file.vocab_size, file.vocabulary_hash, table, file.sampler, file.seed)?;
        let totals_match = model
            .topic_totals
            .iter()
            .zip(&file.topic_totals)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1.0));
        if file.topic_totals.len() != hp.topics || !totals_match {
            return Err(Error::Serde("topic totals disagree with topic-word counts".into()));
        }
        Ok(model)
    }
}

/// On-disk model: `φ` is recomputed from the sparse counts on load.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    hyperparams: LdaHyperparams,
    vocab_size: usize,
    vocabulary_hash: String,
    /// `(topic, word, count)` for every non-zero cell.
    topic_word: Vec<(usize, usize, f64)>,
    topic_totals: Vec<f64>,
    sampler: SamplerConfig,
    seed: u64,
}

impl From<&LdaModel> for ModelFile {
    fn from(m: &LdaModel) -> Self {
        let v = m.vocab_size;
        Self {
            hyperparams: m.hyperparams,
            vocab_size: v,
            vocabulary_hash: m.vocabulary_hash.clone(),
            topic_word: m
                .topic_word
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(i, &c)| (i / v, i % v, c))
                .collect(),
            topic_totals: m.topic_totals.clone(),
            sampler: m.sampler,
            seed: m.seed,
        }
    }
}

/// Trains a model and returns it with the training documents' mixtures.
pub fn train(
    corpus: &BowCorpus,
    hp: LdaHyperparams,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<(LdaModel, DocTopicDist)> {
    cfg.validate()?;
    let mut sampler = GibbsSampler::new(corpus, hp, seed)?;
    train_with(&mut sampler, corpus, cfg, seed, |_, _| {})
}

/// [`train`] with a callback after every sweep, given the 1-based iteration
/// and the chain state.
pub fn train_observed<F>(
    corpus: &BowCorpus,
    hp: LdaHyperparams,
    cfg: &SamplerConfig,
    seed: u64,
    observer: F,
) -> Result<(LdaModel, DocTopicDist)>
where
    F: FnMut(usize, &GibbsState),
{
    cfg.validate()?;
    let mut sampler = GibbsSampler::new(corpus, hp, seed)?;
    train_with(&mut sampler, corpus, cfg, seed, observer)
}

fn train_with<F>(
    sampler: &mut GibbsSampler,
    corpus: &BowCorpus,
    cfg: &SamplerConfig,
    seed: u64,
    mut observer: F,
) -> Result<(LdaModel, DocTopicDist)>
where
    F: FnMut(usize, &GibbsState),
{
    let k_n = sampler.hp.topics;
    let mut acc_doc = vec![0.0f64; sampler.state.doc_topic.len()];
    let mut acc_word = vec![0.0f64; sampler.state.topic_word.len()];
    let mut samples = 0usize;
    for it in 1..=cfg.iterations {
        sampler.sweep();
        observer(it, &sampler.state);
        if cfg.is_sample(it) {
            samples += 1;
            acc_doc.iter_mut().zip(&sampler.state.doc_topic).for_each(|(a, &c)| *a += f64::from(c));
            acc_word.iter_mut().zip(&sampler.state.topic_word).for_each(|(a, &c)| *a += f64::from(c));
        }
    }
    let (doc_counts, word_counts) = if samples > 0 {
        let inv = 1.0 / samples as f64;
        (
            acc_doc.into_iter().map(|c| c * inv).collect::<Vec<_>>(),
            acc_word.into_iter().map(|c| c * inv).collect::<Vec<_>>(),
        )
    } else {
        (
            sampler.state.doc_topic.iter().map(|&c| f64::from(c)).collect(),
            sampler.state.topic_word.iter().map(|&c| f64::from(c)).collect(),
        )
    };
    let hp = sampler.hp;
    let theta = corpus
        .documents
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            let row = doc_counts[d * k_n..(d + 1) * k_n].iter().copied();
            theta_row(row, doc.tokens.len() as f64, k_n, hp.alpha)
        })
        .collect();
    let model = LdaModel::from_counts(
        hp,
        corpus.vocabulary.len(),
        corpus.vocabulary.fingerprint(),
        word_counts,
        *cfg,
        seed,
    )?;
    Ok((model, DocTopicDist { theta }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldIn {
    pub theta: Vec<f64>,
    /// Set when the document had no in-vocabulary tokens; `theta` is then
    /// the uniform prior mean.
    pub empty: bool,
}

/// Infers the topic mixture of one document against a frozen model.
pub fn fold_in(model: &LdaModel, document: &BowDocument, cfg: &SamplerConfig, seed: u64) -> Result<FoldIn> {
    cfg.validate()?;
    let k_n = model.topics();
    let alpha = model.hyperparams.alpha;
    if let Some(&bad) = document.tokens.iter().find(|&&t| t >= model.vocab_size) {
        return Err(Error::Model(format!("token id {bad} outside model vocabulary")));
    }
    if document.tokens.is_empty() {
        warn!("document {} has no in-vocabulary tokens; using the prior", document.source);
        return Ok(FoldIn {
            theta: vec![1.0 / k_n as f64; k_n],
            empty: true,
        });
    }
    let mut rng = rng_from(seed);
    let mut counts = vec![0u32; k_n];
    let mut z: Vec<usize> = document
        .tokens
        .iter()
        .map(|_| {
            let k = rng.random_range(0..k_n);
            counts[k] += 1;
            k
        })
        .collect();
    let mut weights = vec![0.0; k_n];
    let mut acc = vec![0.0f64; k_n];
    let mut samples = 0usize;
    for it in 1..=cfg.iterations {
        for (zi, &w) in z.iter_mut().zip(&document.tokens) {
            counts[*zi] -= 1;
            let mut total = 0.0;
            for k in 0..k_n {
                total += (f64::from(counts[k]) + alpha) * model.phi[k * model.vocab_size + w];
                weights[k] = total;
            }
            *zi = sample_cumulative(&weights, total, &mut rng);
            counts[*zi] += 1;
        }
        if cfg.is_sample(it) {
            samples += 1;
            acc.iter_mut().zip(&counts).for_each(|(a, &c)| *a += f64::from(c));
        }
    }
    let n = document.tokens.len() as f64;
    let theta = if samples > 0 {
        theta_row(acc.iter().map(|a| a / samples as f64), n, k_n, alpha)
    } else {
        theta_row(counts.iter().map(|&c| f64::from(c)), n, k_n, alpha)
    };
    Ok(FoldIn { theta, empty: false })
}

/// Seed used for a document's fold-in chain; derived from its source index
/// so the result does not depend on the document's position in a batch.
pub fn fold_in_seed(seed: u64, document: &BowDocument) -> u64 {
    derive_seed(seed, &[tag::FOLD_IN, document.source as u64])
}

/// Folds in every document of a corpus in parallel.
pub fn fold_in_corpus(model: &LdaModel, corpus: &BowCorpus, cfg: &SamplerConfig, seed: u64) -> Result<DocTopicDist> {
    if corpus.vocabulary.len() != model.vocab_size || corpus.vocabulary.fingerprint() != model.vocabulary_hash {
        return Err(Error::Model("corpus vocabulary does not match the model".into()));
    }
    let theta = corpus
        .documents
        .par_iter()
        .map(|doc| fold_in(model, doc, cfg, fold_in_seed(seed, doc)).map(|f| f.theta))
        .collect::<Result<Vec<_>>>()?;
    Ok(DocTopicDist { theta })
}

/// `Σ_d Σ_{i∈d} log Σ_k θ[d][k]·φ[k][w_i]`.
pub fn log_likelihood(model: &LdaModel, documents: &[BowDocument], theta: &DocTopicDist) -> Result<f64> {
    if documents.len() != theta.len() {
        return Err(Error::Shape(format!(
            "{} documents but {} mixtures",
            documents.len(),
            theta.len()
        )));
    }
    let k_n = model.topics();
    let mut ll = 0.0;
    for (doc, row) in documents.iter().zip(&theta.theta) {
        if row.len() != k_n {
            return Err(Error::Shape(format!("mixture of length {} for {k_n} topics", row.len())));
        }
        for &w in &doc.tokens {
            if w >= model.vocab_size {
                return Err(Error::Shape(format!("token id {w} outside model vocabulary")));
            }
            let p: f64 = (0..k_n).map(|k| row[k] * model.phi[k * model.vocab_size + w]).sum();
            ll += p.ln();
        }
    }
    Ok(ll)
}

/// Settings for estimating symmetric α and β from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperFitConfig {
    pub enabled: bool,
    /// Sweeps before the first update.
    pub warmup_sweeps: usize,
    /// Sweeps between updates.
    pub sweeps_per_round: usize,
    pub max_rounds: usize,
    /// Stop when both priors change by less than this relative amount.
    pub tolerance: f64,
}

impl Default for HyperFitConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            warmup_sweeps: 50,
            sweeps_per_round: 10,
            max_rounds: 50,
            tolerance: 1e-4,
        }
    }
}

const PRIOR_MIN: f64 = 1e-6;
const PRIOR_MAX: f64 = 1e3;

/// Digamma function for positive arguments (recurrence up to 10, then the
/// asymptotic series).
pub(crate) fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln() - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))))
}

/// Fixed-point maximum-likelihood update of a symmetric Dirichlet parameter
/// from grouped counts (`rows` of `dim` counts each).
fn symmetric_dirichlet_update(mut a: f64, counts: &[u32], dim: usize) -> f64 {
    for _ in 0..20 {
        let mut num = 0.0;
        let mut den = 0.0;
        for row in counts.chunks_exact(dim) {
            let total: u32 = row.iter().sum();
            if total == 0 {
                continue;
            }
            num += row.iter().map(|&c| digamma(f64::from(c) + a)).sum::<f64>() - dim as f64 * digamma(a);
            den += digamma(f64::from(total) + dim as f64 * a) - digamma(dim as f64 * a);
        }
        if den <= 0.0 || num <= 0.0 {
            return a;
        }
        let next = a * num / (dim as f64 * den);
        let done = ((next - a) / a).abs() < 1e-8;
        a = next;
        if done || !a.is_finite() {
            break;
        }
    }
    a
}

fn clamp_prior(name: &str, value: f64) -> f64 {
    if !(PRIOR_MIN..=PRIOR_MAX).contains(&value) || !value.is_finite() {
        let clamped = if value.is_nan() { PRIOR_MAX } else { value.clamp(PRIOR_MIN, PRIOR_MAX) };
        warn!("{name} left [{PRIOR_MIN}, {PRIOR_MAX}] during fitting ({value}); clamped to {clamped}");
        clamped
    } else {
        value
    }
}

/// Estimates symmetric α and β by alternating Gibbs sweeps with fixed-point
/// likelihood updates, starting from [`LdaHyperparams::with_defaults`].
/// With fitting disabled the defaults are returned unchanged.
pub fn fit_hyperparams(corpus: &BowCorpus, topics: usize, seed: u64, cfg: &HyperFitConfig) -> Result<LdaHyperparams> {
    let defaults = LdaHyperparams::with_defaults(topics);
    defaults.validate()?;
    if !cfg.enabled {
        return Ok(defaults);
    }
    let mut sampler = GibbsSampler::new(corpus, defaults, derive_seed(seed, &[tag::HYPER]))?;
    for _ in 0..cfg.warmup_sweeps {
        sampler.sweep();
    }
    let (mut alpha, mut beta) = (defaults.alpha, defaults.beta);
    for _ in 0..cfg.max_rounds {
        for _ in 0..cfg.sweeps_per_round {
            sampler.sweep();
        }
        let s = sampler.state();
        let next_alpha = clamp_prior("alpha", symmetric_dirichlet_update(alpha, &s.doc_topic, s.topics));
        let next_beta = if s.vocab_size > 0 {
            clamp_prior("beta", symmetric_dirichlet_update(beta, &s.topic_word, s.vocab_size))
        } else {
            beta
        };
        let change = ((next_alpha - alpha) / alpha).abs().max(((next_beta - beta) / beta).abs());
        alpha = next_alpha;
        beta = next_beta;
        sampler.set_priors(alpha, beta)?;
        if change < cfg.tolerance {
            break;
        }
    }
    LdaHyperparams::new(topics, alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Axis, Sensor};
    use crate::words::{SensoryWord, Vocabulary};

    pub(crate) fn corpus_from(docs: Vec<Vec<usize>>, v: usize) -> BowCorpus {
        let words = (0..v)
            .map(|i| SensoryWord {
                axis: Axis::X,
                characters: vec![(Sensor::Accelerometer, i)],
            })
            .collect();
        BowCorpus {
            documents: docs
                .into_iter()
                .enumerate()
                .map(|(source, tokens)| BowDocument {
                    tokens,
                    source,
                    label: None,
                    oov_count: 0,
                })
                .collect(),
            vocabulary: Vocabulary::from_words(words).unwrap(),
            removed: vec![],
        }
    }

    #[test]
    fn digamma_reference_values() {
        assert!((digamma(1.0) + 0.577_215_664_901_532_9).abs() < 1e-12);
        assert!((digamma(0.5) + 1.963_510_026_021_423_5).abs() < 1e-12);
        assert!((digamma(10.0) - 2.251_752_589_066_721).abs() < 1e-12);
        assert!((digamma(1e-3) + 1_000.575_571_931_81).abs() < 1e-8);
    }

    #[test]
    fn two_single_word_documents_separate() {
        let corpus = corpus_from(vec![vec![0; 50], vec![1; 50]], 2);
        let hp = LdaHyperparams::new(2, 0.1, 0.01).unwrap();
        let cfg = SamplerConfig {
            iterations: 200,
            burn_in: 100,
            sample_lag: 0,
        };
        let (model, theta) = train(&corpus, hp, &cfg, 3).unwrap();
        let top: Vec<usize> = (0..2)
            .map(|k| {
                let row = model.phi(k);
                assert!(row[0].max(row[1]) >= 0.95, "{row:?}");
                usize::from(row[1] > row[0])
            })
            .collect();
        assert_ne!(top[0], top[1]);
        assert_eq!(theta.len(), 2);
    }

    #[test]
    fn single_topic_theta_is_one() {
        let corpus = corpus_from(vec![vec![0, 1, 2], vec![], vec![2, 2]], 3);
        let hp = LdaHyperparams::new(1, 0.5, 0.01).unwrap();
        let (_, theta) = train(&corpus, hp, &SamplerConfig { iterations: 5, burn_in: 0, sample_lag: 0 }, 0).unwrap();
        for row in &theta.theta {
            assert_eq!(row, &vec![1.0]);
        }
    }

    #[test]
    fn conservation_after_every_sweep_and_normalization() {
        let docs = (0..30).map(|d| (0..40).map(|i| (d * 7 + i * 3) % 25).collect()).collect();
        let corpus = corpus_from(docs, 25);
        let hp = LdaHyperparams::new(4, 0.3, 0.05).unwrap();
        let cfg = SamplerConfig { iterations: 30, burn_in: 10, sample_lag: 5 };
        let mut sweeps = 0;
        let (model, theta) = train_observed(&corpus, hp, &cfg, 1, |_, s| {
            s.check_conservation().unwrap();
            sweeps += 1;
        })
        .unwrap();
        assert_eq!(sweeps, 30);
        for k in 0..4 {
            let s: f64 = model.phi(k).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(model.phi(k).iter().all(|&p| p > 0.0));
        }
        for row in &theta.theta {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_corpus_and_bad_config_rejected() {
        let corpus = corpus_from(vec![], 3);
        let hp = LdaHyperparams::with_defaults(2);
        assert!(matches!(train(&corpus, hp, &SamplerConfig::default(), 0), Err(Error::Model(_))));
        let corpus = corpus_from(vec![vec![0]], 3);
        let bad = SamplerConfig { iterations: 10, burn_in: 10, sample_lag: 0 };
        assert!(train(&corpus, hp, &bad, 0).is_err());
        assert!(LdaHyperparams::new(2, 0.0, 0.1).is_err());
        assert!(LdaHyperparams::new(0, 1.0, 0.1).is_err());
    }

    #[test]
    fn empty_document_folds_to_uniform() {
        let corpus = corpus_from(vec![vec![0, 1], vec![1, 2]], 3);
        let (model, _) = train(&corpus, LdaHyperparams::with_defaults(3), &SamplerConfig { iterations: 10, burn_in: 2, sample_lag: 0 }, 0).unwrap();
        let empty = BowDocument { tokens: vec![], source: 0, label: None, oov_count: 4 };
        let f = fold_in(&model, &empty, &SamplerConfig::default(), 1).unwrap();
        assert!(f.empty);
        assert_eq!(f.theta, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn likelihood_formula_and_additivity() {
        let corpus = corpus_from(vec![vec![0, 1, 1], vec![2]], 3);
        let (model, theta) = train(&corpus, LdaHyperparams::new(2, 0.5, 0.1).unwrap(), &SamplerConfig { iterations: 20, burn_in: 5, sample_lag: 0 }, 2).unwrap();
        let ll = log_likelihood(&model, &corpus.documents, &theta).unwrap();
        let mut manual = 0.0;
        for (doc, row) in corpus.documents.iter().zip(&theta.theta) {
            for &w in &doc.tokens {
                manual += (row[0] * model.phi(0)[w] + row[1] * model.phi(1)[w]).ln();
            }
        }
        assert!((ll - manual).abs() < 1e-12);
        let mut docs = corpus.documents.clone();
        docs.extend(corpus.documents.clone());
        let twice = DocTopicDist { theta: [theta.theta.clone(), theta.theta.clone()].concat() };
        assert!((log_likelihood(&model, &docs, &twice).unwrap() - 2.0 * ll).abs() < 1e-12);
        assert!(log_likelihood(&model, &docs, &theta).is_err());
    }

    #[test]
    fn likelihood_single_word_is_log_half() {
        // one topic over two words with equal counts gives φ = [0.5, 0.5]
        let table = vec![3.0, 3.0];
        let model = LdaModel::from_counts(LdaHyperparams::new(1, 1.0, 0.5).unwrap(), 2, String::new(), table, SamplerConfig::default(), 0).unwrap();
        let doc = BowDocument { tokens: vec![1], source: 0, label: None, oov_count: 0 };
        let ll = log_likelihood(&model, &[doc], &DocTopicDist { theta: vec![vec![1.0]] }).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn model_json_round_trip() {
        let docs = (0..10).map(|d| (0..12).map(|i| (d + i * i) % 9).collect()).collect();
        let corpus = corpus_from(docs, 9);
        let cfg = SamplerConfig { iterations: 20, burn_in: 4, sample_lag: 3 };
        let (model, _) = train(&corpus, LdaHyperparams::new(3, 0.2, 0.02).unwrap(), &cfg, 12).unwrap();
        let text = model.to_json().unwrap();
        let back = LdaModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn hyperparameter_fitting() {
        let corpus = corpus_from(vec![vec![0; 50], vec![1; 50], vec![0; 50], vec![1; 50]], 2);
        let off = HyperFitConfig::default();
        assert_eq!(fit_hyperparams(&corpus, 2, 0, &off).unwrap(), LdaHyperparams::with_defaults(2));
        let on = HyperFitConfig { enabled: true, ..off };
        let fitted = fit_hyperparams(&corpus, 2, 5, &on).unwrap();
        assert!(fitted.alpha < LdaHyperparams::with_defaults(2).alpha, "{fitted:?}");
        assert_eq!(fitted, fit_hyperparams(&corpus, 2, 5, &on).unwrap());
    }
}
