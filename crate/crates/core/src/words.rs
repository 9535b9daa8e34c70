//! Sensory words, the vocabulary, and bag-of-words corpora.
//!
//! A sensory word joins, for one axis and one window offset, the characters
//! that every sensor's codebook assigns to its synchronized subsequence. The
//! axis is part of the word, so `x:acc=2|gyro=5` and `y:acc=2|gyro=5` are
//! different words.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codebook::CodebookSet;
use crate::dataset::{ActivityLabel, Axis, DataSequence, MultiSensorDataset, Sensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SensoryWord {
    pub axis: Axis,
    /// One character per sensor, in canonical sensor order.
    pub characters: Vec<(Sensor, usize)>,
}

impl fmt::Display for SensoryWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.axis.as_str())?;
        for (i, (sensor, idx)) in self.characters.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{}={idx}", sensor.as_str())?;
        }
        Ok(())
    }
}

impl FromStr for SensoryWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed sensory word {s:?}"));
        let (axis, rest) = s.split_once(':').ok_or_else(bad)?;
        let characters = rest
            .split('|')
            .map(|part| {
                let (sensor, idx) = part.split_once('=').ok_or_else(bad)?;
                Ok((sensor.parse()?, idx.parse().map_err(|_| bad())?))
            })
            .collect::<Result<Vec<(Sensor, usize)>>>()?;
        if !characters.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(bad());
        }
        Ok(SensoryWord {
            axis: axis.parse()?,
            characters,
        })
    }
}

/// Composes the words of one sequence, axis by axis, each axis in window
/// order. Yields `axes * windows` words.
pub fn compose_words(sequence: &DataSequence, codebooks: &CodebookSet) -> Result<Vec<SensoryWord>> {
    if !sequence.channels.keys().copied().eq(codebooks.channels()) {
        return Err(Error::Composition(format!(
            "sequence channels [{}] do not match codebook channels [{}]",
            join(sequence.channels.keys()),
            join(codebooks.channels())
        )));
    }
    let window = codebooks.window();
    let t = sequence.len();
    window
        .check_length(t)
        .map_err(|e| Error::Composition(e.to_string()))?;

    let mut by_axis: BTreeMap<Axis, Vec<(Sensor, Vec<usize>)>> = BTreeMap::new();
    for (key, series) in &sequence.channels {
        let codebook = codebooks.get(*key).expect("channel sets are equal");
        let chars = window
            .offsets(t)
            .map(|o| codebook.assign_character(&series[o..o + window.size()]))
            .collect::<Result<Vec<_>>>()?;
        by_axis.entry(key.axis).or_default().push((key.sensor, chars));
    }

    let windows = window.count(t);
    let mut words = Vec::with_capacity(by_axis.len() * windows);
    for (axis, mut sensors) in by_axis {
        sensors.sort_by_key(|(s, _)| *s);
        for w in 0..windows {
            words.push(SensoryWord {
                axis,
                characters: sensors.iter().map(|(s, chars)| (*s, chars[w])).collect(),
            });
        }
    }
    Ok(words)
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Bijection between sensory words and contiguous ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<SensoryWord>,
    index: HashMap<SensoryWord, usize>,
}

impl Vocabulary {
    pub fn from_words(words: Vec<SensoryWord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (id, w) in words.iter().enumerate() {
            if index.insert(w.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary word {w}")));
            }
        }
        Ok(Self { words, index })
    }

    fn intern(&mut self, word: SensoryWord) -> usize {
        let next = self.words.len();
        *self.index.entry(word).or_insert_with_key(|w| {
            self.words.push(w.clone());
            next
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &SensoryWord) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&SensoryWord> {
        self.words.get(id)
    }

    pub fn words(&self) -> &[SensoryWord] {
        &self.words
    }

    /// SHA-256 over the rendered words in id order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.to_string().as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// JSON object mapping rendered word to id.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<String, usize> = self
            .words
            .iter()
            .enumerate()
            .map(|(id, w)| (w.to_string(), id))
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, usize> = serde_json::from_str(text)?;
        let mut slots: Vec<Option<SensoryWord>> = vec![None; map.len()];
        for (text, id) in map {
            let slot = slots
                .get_mut(id)
                .ok_or_else(|| Error::Config(format!("vocabulary id {id} is not contiguous")))?;
            if slot.replace(text.parse()?).is_some() {
                return Err(Error::Config(format!("vocabulary id {id} used twice")));
            }
        }
        Self::from_words(slots.into_iter().map(|w| w.expect("ids are a permutation")).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowDocument {
    pub tokens: Vec<usize>,
    /// Index of the originating sequence.
    pub source: usize,
    pub label: Option<ActivityLabel>,
    /// Words with no vocabulary entry; excluded from `tokens`.
    pub oov_count: usize,
}

impl BowDocument {
    /// Word count including out-of-vocabulary words.
    pub fn len(&self) -> usize {
        self.tokens.len() + self.oov_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowCorpus {
    pub documents: Vec<BowDocument>,
    pub vocabulary: Vocabulary,
    /// Words stripped by frequency pruning, most frequent first.
    pub removed: Vec<SensoryWord>,
}

impl BowCorpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Total word count, out-of-vocabulary words included.
    pub fn n_tokens(&self) -> usize {
        self.documents.iter().map(BowDocument::len).sum()
    }

    pub fn oov_total(&self) -> usize {
        self.documents.iter().map(|d| d.oov_count).sum()
    }

    pub fn label_ids(&self) -> Option<Vec<usize>> {
        self.documents
            .iter()
            .map(|d| d.label.as_ref().map(|l| l.id))
            .collect()
    }

    /// Re-expresses every document over `target`, dropping tokens whose
    /// word `target` does not contain (used to carry a frequency pruning
    /// over to a held-out corpus).
    pub fn retain_vocabulary(&self, target: &Vocabulary) -> BowCorpus {
        let remap: Vec<Option<usize>> = self.vocabulary.words().iter().map(|w| target.id(w)).collect();
        BowCorpus {
            documents: self
                .documents
                .iter()
                .map(|d| BowDocument {
                    tokens: d.tokens.iter().filter_map(|&t| remap[t]).collect(),
                    ..d.clone()
                })
                .collect(),
            vocabulary: target.clone(),
            removed: self
                .vocabulary
                .words()
                .iter()
                .zip(&remap)
                .filter(|(_, r)| r.is_none())
                .map(|(w, _)| w.clone())
                .collect(),
        }
    }

    /// One document per line, rendered words separated by spaces.
    pub fn write_documents<W: Write>(&self, mut out: W) -> Result<()> {
        for doc in &self.documents {
            let line = doc
                .tokens
                .iter()
                .map(|&t| self.vocabulary.words[t].to_string())
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads the line format of [`write_documents`](Self::write_documents)
    /// against a frozen vocabulary; unknown words count as out-of-vocabulary.
    pub fn read_documents<R: BufRead>(input: R, vocabulary: Vocabulary) -> Result<BowCorpus> {
        let mut documents = Vec::new();
        for (source, line) in input.lines().enumerate() {
            let line = line?;
            let mut doc = BowDocument {
                tokens: Vec::new(),
                source,
                label: None,
                oov_count: 0,
            };
            for tok in line.split_whitespace() {
                match vocabulary.id(&tok.parse()?) {
                    Some(id) => doc.tokens.push(id),
                    None => doc.oov_count += 1,
                }
            }
            documents.push(doc);
        }
        Ok(BowCorpus {
            documents,
            vocabulary,
            removed: Vec::new(),
        })
    }
}

/// Converts every sequence into a bag of sensory words.
///
/// Without `vocab`, the vocabulary is built from the observed words in
/// first-occurrence order. With `vocab`, it is used frozen: unseen words are
/// tallied in each document's `oov_count` and never receive an id.
pub fn build_corpus(
    dataset: &MultiSensorDataset,
    codebooks: &CodebookSet,
    vocab: Option<&Vocabulary>,
) -> Result<BowCorpus> {
    let composed = dataset
        .sequences()
        .par_iter()
        .map(|s| compose_words(s, codebooks))
        .collect::<Result<Vec<_>>>()?;

    let mut vocabulary = vocab.cloned().unwrap_or_default();
    let frozen = vocab.is_some();
    let documents = composed
        .into_iter()
        .zip(dataset.sequences())
        .enumerate()
        .map(|(source, (words, seq))| {
            let mut doc = BowDocument {
                tokens: Vec::with_capacity(words.len()),
                source,
                label: seq.label.clone(),
                oov_count: 0,
            };
            for w in words {
                if frozen {
                    match vocabulary.id(&w) {
                        Some(id) => doc.tokens.push(id),
                        None => doc.oov_count += 1,
                    }
                } else {
                    doc.tokens.push(vocabulary.intern(w));
                }
            }
            doc
        })
        .collect();
    Ok(BowCorpus {
        documents,
        vocabulary,
        removed: Vec::new(),
    })
}

/// In-vocabulary word counts, most frequent first, ties by id. Words that
/// never occur are omitted.
pub fn word_frequencies(corpus: &BowCorpus) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = id_counts(corpus)
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

fn id_counts(corpus: &BowCorpus) -> Vec<usize> {
    let mut counts = vec![0usize; corpus.vocabulary.len()];
    for doc in &corpus.documents {
        for &t in &doc.tokens {
            counts[t] += 1;
        }
    }
    counts
}

/// Strips the `n` most frequent words from every document and re-indexes the
/// remaining vocabulary, keeping the relative order of surviving ids.
pub fn remove_top_words(corpus: &BowCorpus, n: usize) -> Result<BowCorpus> {
    let v = corpus.vocabulary.len();
    if n > v {
        return Err(Error::Range(format!(
            "cannot remove {n} words from a vocabulary of {v}"
        )));
    }
    let counts = id_counts(corpus);
    let mut ranked: Vec<usize> = (0..v).collect();
    ranked.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let dropped: HashSet<usize> = ranked[..n].iter().copied().collect();

    let survivors: Vec<SensoryWord> = corpus
        .vocabulary
        .words()
        .iter()
        .enumerate()
        .filter(|(id, _)| !dropped.contains(id))
        .map(|(_, w)| w.clone())
        .collect();
    let vocabulary = Vocabulary::from_words(survivors)?;
    let mut pruned = corpus.retain_vocabulary(&vocabulary);
    pruned.removed = corpus
        .removed
        .iter()
        .cloned()
        .chain(ranked[..n].iter().map(|&id| corpus.vocabulary.words[id].clone()))
        .collect();
    Ok(pruned)
}
