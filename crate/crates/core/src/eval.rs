//! Extrinsic evaluation: topic→class mapping, precision/recall/F1, the
//! confusion matrix and corpus statistics.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::ActivityLabel;
use crate::error::{Error, Result};
use crate::lda::DocTopicDist;
use crate::words::{word_frequencies, BowCorpus};

/// Most probable topic per document; ties go to the lowest topic index.
pub fn assign_classes(theta: &DocTopicDist) -> Vec<usize> {
    theta.theta.iter().map(|row| argmax(row)).collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = k;
        }
    }
    best
}

/// Topic × class document counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ContingencyMatrix {
    pub fn from_assignments(topics: &[usize], labels: &[usize], n_topics: usize, n_classes: usize) -> Result<Self> {
        if topics.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} labels",
                topics.len(),
                labels.len()
            )));
        }
        let mut counts = vec![vec![0usize; n_classes]; n_topics];
        for (&t, &c) in topics.iter().zip(labels) {
            if t >= n_topics || c >= n_classes {
                return Err(Error::Shape(format!("pair ({t}, {c}) outside {n_topics}x{n_classes}")));
            }
            counts[t][c] += 1;
        }
        Ok(Self { counts })
    }

    pub fn topics(&self) -> usize {
        self.counts.len()
    }

    pub fn classes(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Bijection from topics to classes, indexed by topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicClassMapping {
    pub topic_to_class: Vec<usize>,
}

impl TopicClassMapping {
    pub fn identity(n: usize) -> Self {
        Self {
            topic_to_class: (0..n).collect(),
        }
    }

    pub fn class_of(&self, topic: usize) -> usize {
        self.topic_to_class[topic]
    }

    /// Fraction of documents whose topic maps to their class.
    pub fn accuracy(&self, contingency: &ContingencyMatrix) -> f64 {
        let total = contingency.total();
        if total == 0 {
            return 0.0;
        }
        let hits: usize = self
            .topic_to_class
            .iter()
            .enumerate()
            .map(|(t, &c)| contingency.counts[t][c])
            .sum();
        hits as f64 / total as f64
    }

    fn validate(&self, classes: usize) -> Result<()> {
        let mut seen = vec![false; classes];
        for &c in &self.topic_to_class {
            if c >= classes || std::mem::replace(&mut seen[c], true) {
                return Err(Error::Mapping(format!("{:?} is not a bijection", self.topic_to_class)));
            }
        }
        if self.topic_to_class.len() != classes {
            return Err(Error::Mapping(format!(
                "{} topics for {classes} classes",
                self.topic_to_class.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingMode {
    /// Repeatedly bind the largest remaining cell.
    #[default]
    Greedy,
    /// Maximum-weight assignment.
    Optimal,
}

impl FromStr for MappingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "optimal" => Ok(Self::Optimal),
            other => Err(Error::Config(format!("unknown mapping mode {other:?}"))),
        }
    }
}

fn check_square(contingency: &ContingencyMatrix) -> Result<usize> {
    let k = contingency.topics();
    if k != contingency.classes() || contingency.counts.iter().any(|r| r.len() != k) {
        return Err(Error::Mapping(format!(
            "{} topics cannot be matched one-to-one with {} classes",
            k,
            contingency.classes()
        )));
    }
    Ok(k)
}

/// Greedy matching: take the largest remaining cell (ties: lowest topic,
/// then lowest class), bind that topic to that class, remove both, repeat.
pub fn map_topics(contingency: &ContingencyMatrix) -> Result<TopicClassMapping> {
    let k = check_square(contingency)?;
    let mut topic_to_class = vec![usize::MAX; k];
    let mut class_taken = vec![false; k];
    for _ in 0..k {
        let mut best: Option<(usize, usize, usize)> = None;
        for (t, row) in contingency.counts.iter().enumerate() {
            if topic_to_class[t] != usize::MAX {
                continue;
            }
            for (c, &n) in row.iter().enumerate() {
                if !class_taken[c] && best.is_none_or(|(_, _, b)| n > b) {
                    best = Some((t, c, n));
                }
            }
        }
        let (t, c, _) = best.expect("a free cell remains");
        topic_to_class[t] = c;
        class_taken[c] = true;
    }
    Ok(TopicClassMapping { topic_to_class })
}

/// Maximum-weight bijection (Hungarian algorithm with potentials).
pub fn optimal_mapping(contingency: &ContingencyMatrix) -> Result<TopicClassMapping> {
    let n = check_square(contingency)?;
    let max = contingency.counts.iter().flatten().copied().max().unwrap_or(0) as i64;
    // minimise max - count, 1-based arrays as in the classic formulation
    let cost = |i: usize, j: usize| max - contingency.counts[i - 1][j - 1] as i64;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut topic_to_class = vec![0; n];
    for j in 1..=n {
        topic_to_class[p[j] - 1] = j - 1;
    }
    Ok(TopicClassMapping { topic_to_class })
}

pub fn build_mapping(contingency: &ContingencyMatrix, mode: MappingMode) -> Result<TopicClassMapping> {
    match mode {
        MappingMode::Greedy => map_topics(contingency),
        MappingMode::Optimal => optimal_mapping(contingency),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Documents.
    pub d: usize,
    /// Total words.
    pub n: usize,
    /// Mean words per document, rounded.
    pub b: usize,
    /// Vocabulary size.
    pub v: usize,
    /// Topics.
    pub k: usize,
}

pub fn corpus_statistics(corpus: &BowCorpus, topics: usize) -> CorpusStats {
    let d = corpus.len();
    let n = corpus.n_tokens();
    let b = if d == 0 { 0 } else { (n as f64 / d as f64).round() as usize };
    CorpusStats {
        d,
        n,
        b,
        v: corpus.vocabulary.len(),
        k: topics,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes, both in class-id
    /// order.
    pub confusion: Vec<Vec<usize>>,
    pub mapping: TopicClassMapping,
    pub stats: Option<CorpusStats>,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores topic predictions against class labels through `mapping`.
/// Macro scores are unweighted means over classes.
pub fn compute_report(
    topics: &[usize],
    labels: &[usize],
    mapping: &TopicClassMapping,
    classes: &[ActivityLabel],
    stats: Option<CorpusStats>,
) -> Result<EvalReport> {
    if topics.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            topics.len(),
            labels.len()
        )));
    }
    let c_n = classes.len();
    mapping.validate(c_n)?;
    let mut confusion = vec![vec![0usize; c_n]; c_n];
    for (&t, &y) in topics.iter().zip(labels) {
        if t >= c_n || y >= c_n {
            return Err(Error::Shape(format!("pair ({t}, {y}) outside {c_n} classes")));
        }
        confusion[y][mapping.class_of(t)] += 1;
    }
    let per_class: Vec<ClassMetrics> = classes
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics {
                class: label.name.clone(),
                precision,
                recall,
                f1: f1(precision, recall),
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if per_class.is_empty() {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / per_class.len() as f64
        }
    };
    let correct: usize = (0..c_n).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: ratio(correct, labels.len()),
        per_class,
        confusion,
        mapping: mapping.clone(),
        stats,
    })
}

/// `actual\predicted,<class>...` header, one row per true class.
pub fn write_confusion_csv<W: Write>(report: &EvalReport, mut out: W) -> Result<()> {
    let names: Vec<&str> = report.per_class.iter().map(|m| m.class.as_str()).collect();
    writeln!(out, "actual\\predicted,{}", names.join(","))?;
    for (name, row) in names.iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
        writeln!(out, "{name},{}", cells.join(","))?;
    }
    Ok(())
}

/// One row per document: `doc_id,true_label,predicted_class,theta_0..`.
/// Label columns are empty when unknown.
pub fn write_theta_csv<W: Write>(
    theta: &DocTopicDist,
    labels: Option<&[usize]>,
    mapping: Option<&TopicClassMapping>,
    classes: &[ActivityLabel],
    mut out: W,
) -> Result<()> {
    let k = theta.topics();
    let header: Vec<String> = (0..k).map(|i| format!("theta_{i}")).collect();
    writeln!(out, "doc_id,true_label,predicted_class,{}", header.join(","))?;
    let name = |c: usize| classes.get(c).map_or_else(|| c.to_string(), |l| l.name.clone());
    for (d, row) in theta.theta.iter().enumerate() {
        let truth = labels.map(|l| name(l[d])).unwrap_or_default();
        let predicted = mapping.map(|m| name(m.class_of(argmax(row)))).unwrap_or_default();
        let values: Vec<String> = row.iter().map(|p| format!("{p}")).collect();
        writeln!(out, "{d},{truth},{predicted},{}", values.join(","))?;
    }
    Ok(())
}

/// `rank,word,count` rows, most frequent first.
pub fn write_word_frequency_csv<W: Write>(corpus: &BowCorpus, mut out: W) -> Result<()> {
    writeln!(out, "rank,word,count")?;
    for (rank, (id, count)) in word_frequencies(corpus).into_iter().enumerate() {
        let word = corpus.vocabulary.word(id).expect("frequency ids are in vocabulary");
        writeln!(out, "{},{word},{count}", rank + 1)?;
    }
    Ok(())
}
