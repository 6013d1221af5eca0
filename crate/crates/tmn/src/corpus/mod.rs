//! Corpus ingestion: parsing, tokenization, vocabularies, views, splits.
//!
//! Each labeled line becomes one [`Document`] carrying two views of the
//! same text: an unordered bag-of-words vector for the topic model and the
//! raw token index sequence for the classifier. The views use different
//! vocabularies because the topic model drops stop words while the
//! classifier keeps them.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod store;
mod tokenize;
mod vocab;

pub use store::{load_prepared, save_prepared};
pub use tokenize::tokenize;
pub use vocab::{
    build_bow_vocabulary, build_seq_vocabulary, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("no vocabulary words survive filtering")]
    EmptyVocabulary,
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("prepared corpus is malformed: {0}")]
    Format(String),
}

/// One instance: both views plus its class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    /// Sparse bag-of-words counts as (vocab index, count), ascending index.
    pub bow: Vec<(usize, u32)>,
    /// Raw-order sequence vocabulary indices, truncated to `l_max`.
    pub seq: Vec<usize>,
    /// Class index.
    pub label: usize,
}

impl Document {
    /// A document whose bag-of-words view is empty carries no signal for
    /// the topic model.
    pub fn is_degenerate(&self) -> bool {
        self.bow.is_empty()
    }
}

/// Index lists of the three partitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Knobs for [`prepare_corpus`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrepareConfig {
    /// Minimum training document frequency for a word to be retained.
    pub min_count: usize,
    pub lowercase: bool,
    /// Record word presence instead of counts in the bag-of-words view.
    pub binary_bow: bool,
    /// Sequence length cap; defaults to the 95th percentile of training
    /// lengths when unset.
    pub l_max: Option<usize>,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig { min_count: 3, lowercase: true, binary_bow: false, l_max: None, seed: 42 }
    }
}

/// Corpus-level facts recorded alongside the documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub v: usize,
    pub v_seq: usize,
    pub c: usize,
    pub l_max: usize,
    /// Mean token count per document before truncation.
    pub avg_len: f64,
    pub min_count: usize,
    pub lowercase: bool,
    pub binary_bow: bool,
    /// Indices of documents whose bag-of-words view came out empty.
    pub degenerate: Vec<usize>,
}

/// Everything training and evaluation need, ready to serialize.
#[derive(Debug)]
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub seq_vocab: Vocabulary,
    pub docs: Vec<Document>,
    pub split: Split,
    /// Label names in class-index order (first-seen in the input).
    pub labels: Vec<String>,
    pub meta: CorpusMeta,
}

impl PreparedCorpus {
    /// Corpus statistics in the usual dataset-table shape.
    pub fn summary(&self) -> String {
        format!(
            "# of labels: {}\n# of docs: {}\nAvg len per doc: {:.2}\nVocab size: {}",
            self.labels.len(),
            self.docs.len(),
            self.meta.avg_len,
            self.vocab.len()
        )
    }
}

/// Parse `label<TAB>text` lines into a full [`PreparedCorpus`].
///
/// The split is drawn before any vocabulary statistics, so nothing from
/// the dev or test partitions leaks into the word filters.
pub fn prepare_corpus(
    input: &str,
    stopwords: &HashSet<String>,
    config: &PrepareConfig,
) -> Result<PreparedCorpus, CorpusError> {
    let mut labels: Vec<String> = Vec::new();
    let mut label_ids: Vec<usize> = Vec::new();
    let mut token_docs: Vec<Vec<String>> = Vec::new();

    for (lineno, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| CorpusError::Parse {
            line: lineno + 1,
            reason: "expected `label<TAB>text`".to_owned(),
        })?;
        let label = label.trim();
        if label.is_empty() {
            return Err(CorpusError::Parse { line: lineno + 1, reason: "empty label".to_owned() });
        }
        let label_id = match labels.iter().position(|l| l == label) {
            Some(id) => id,
            None => {
                labels.push(label.to_owned());
                labels.len() - 1
            }
        };
        label_ids.push(label_id);
        token_docs.push(tokenize(text, config.lowercase));
    }
    if token_docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    let split = draw_split(token_docs.len(), config.seed);

    let train_tokens: Vec<Vec<String>> =
        split.train.iter().map(|&i| token_docs[i].clone()).collect();
    let vocab = build_bow_vocabulary(&train_tokens, config.min_count, stopwords)?;
    let seq_vocab = build_seq_vocabulary(&train_tokens, config.min_count);

    let l_max = config.l_max.unwrap_or_else(|| {
        percentile_95(train_tokens.iter().map(Vec::len)).max(1)
    });

    let mut docs = Vec::with_capacity(token_docs.len());
    let mut degenerate = Vec::new();
    let mut total_len = 0usize;
    for (i, tokens) in token_docs.iter().enumerate() {
        total_len += tokens.len();
        let doc = Document {
            bow: bow_counts(tokens, &vocab, config.binary_bow),
            seq: tokens
                .iter()
                .take(l_max)
                .map(|t| seq_vocab.id(t).unwrap_or(UNK))
                .collect(),
            label: label_ids[i],
        };
        if doc.is_degenerate() {
            degenerate.push(i);
        }
        docs.push(doc);
    }

    let meta = CorpusMeta {
        v: vocab.len(),
        v_seq: seq_vocab.len(),
        c: labels.len(),
        l_max,
        avg_len: total_len as f64 / docs.len() as f64,
        min_count: config.min_count,
        lowercase: config.lowercase,
        binary_bow: config.binary_bow,
        degenerate,
    };
    Ok(PreparedCorpus { vocab, seq_vocab, docs, split, labels, meta })
}

/// Sparse counts over the bag-of-words vocabulary, ascending index order.
pub fn bow_counts(tokens: &[String], vocab: &Vocabulary, binary: bool) -> Vec<(usize, u32)> {
    let mut counts: std::collections::BTreeMap<usize, u32> = std::collections::BTreeMap::new();
    for token in tokens {
        if let Some(id) = vocab.id(token) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .map(|(id, c)| (id, if binary { 1 } else { c }))
        .collect()
}

/// Shuffle indices and carve off 20% test, then 20% of the rest as dev.
fn draw_split(n: usize, seed: u64) -> Split {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = crate::rng::named_stream(seed, "split");
    order.shuffle(&mut rng);

    let n_test = ((n as f64) * 0.2).round() as usize;
    let n_dev = (((n - n_test) as f64) * 0.2).round() as usize;

    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut dev: Vec<usize> = order[n_test..n_test + n_dev].to_vec();
    let mut train: Vec<usize> = order[n_test + n_dev..].to_vec();
    test.sort_unstable();
    dev.sort_unstable();
    train.sort_unstable();
    Split { train, dev, test, seed }
}

/// Nearest-rank 95th percentile.
fn percentile_95(lengths: impl Iterator<Item = usize>) -> usize {
    let mut sorted: Vec<usize> = lengths.collect();
    if sorted.is_empty() {
        return 0;
    }
    sorted.sort_unstable();
    let rank = ((sorted.len() as f64) * 0.95).ceil() as usize;
    sorted[rank.saturating_sub(1)]
}
