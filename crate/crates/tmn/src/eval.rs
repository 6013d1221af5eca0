//! Classification metrics, the majority-vote baseline, and topic
//! coherence over document-level co-occurrence.

use std::collections::HashSet;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PreparedCorpus;

/// The selected documents as word sets over the bag-of-words vocabulary,
/// the reference form [`npmi_coherence`] consumes.
pub fn document_word_sets(corpus: &PreparedCorpus, indices: &[usize]) -> Vec<HashSet<String>> {
    indices
        .iter()
        .map(|&i| {
            corpus.docs[i]
                .bow
                .iter()
                .map(|&(id, _)| corpus.vocab.word(id).to_owned())
                .collect()
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and gold lists differ in length: {pred} vs {gold}")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("no instances to score")]
    NoInstances,
    #[error("label {label} outside the {c}-class range")]
    LabelOutOfRange { label: usize, c: usize },
}

/// Precision, recall, and their harmonic mean for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full classification scorecard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Unweighted mean of per-class F1 over every class, including
    /// classes absent from both lists (those score zero).
    pub macro_f1: f64,
    pub per_class: Vec<PerClass>,
    /// `confusion[gold][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
}

/// Score predictions against gold labels over a fixed set of `c` classes.
pub fn classification_metrics(
    pred: &[usize],
    gold: &[usize],
    c: usize,
) -> Result<MetricsReport, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gold: gold.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::NoInstances);
    }
    let mut confusion = vec![vec![0usize; c]; c];
    for (&p, &g) in pred.iter().zip(gold) {
        if p >= c {
            return Err(EvalError::LabelOutOfRange { label: p, c });
        }
        if g >= c {
            return Err(EvalError::LabelOutOfRange { label: g, c });
        }
        confusion[g][p] += 1;
    }

    let total = pred.len() as f64;
    let trace: usize = (0..c).map(|k| confusion[k][k]).sum();
    let accuracy = trace as f64 / total;

    let per_class: Vec<PerClass> = (0..c)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let predicted: usize = (0..c).map(|g| confusion[g][k]).sum();
            let actual: usize = confusion[k].iter().sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            PerClass { precision, recall, f1 }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|p| p.f1).sum::<f64>() / c as f64;

    Ok(MetricsReport { accuracy, macro_f1, per_class, confusion })
}

/// Score the baseline that always predicts the most frequent training
/// label (ties broken by label name).
pub fn majority_vote_baseline(
    train_gold: &[usize],
    test_gold: &[usize],
    labels: &[String],
) -> Result<MetricsReport, EvalError> {
    let c = labels.len();
    let mut counts = vec![0usize; c];
    for &g in train_gold {
        if g >= c {
            return Err(EvalError::LabelOutOfRange { label: g, c });
        }
        counts[g] += 1;
    }
    let majority = (0..c)
        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then_with(|| labels[b].cmp(&labels[a])))
        .ok_or(EvalError::NoInstances)?;
    let pred = vec![majority; test_gold.len()];
    classification_metrics(&pred, test_gold, c)
}

/// Per-topic coherence scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub per_topic_npmi: Vec<f64>,
    pub mean_npmi: f64,
    /// How many top words per topic went into the pair means.
    pub top_n: usize,
}

const NPMI_EPS: f64 = 1e-12;

/// Normalized pointwise mutual information of one word pair from
/// document frequencies.
///
/// A pair that never co-occurs scores -1; a pair present in every
/// document scores 1 (both words must then also be in every document).
pub fn pair_npmi(df_i: usize, df_j: usize, joint: usize, n_docs: usize) -> f64 {
    if joint == 0 {
        return -1.0;
    }
    if joint == n_docs {
        return 1.0;
    }
    let n = n_docs as f64;
    let p_ij = joint as f64 / n;
    let p_i = df_i as f64 / n;
    let p_j = df_j as f64 / n;
    let log_joint = (p_ij + NPMI_EPS).ln();
    let pmi = log_joint - (p_i + NPMI_EPS).ln() - (p_j + NPMI_EPS).ln();
    (pmi / -log_joint).clamp(-1.0, 1.0)
}

/// Mean NPMI over each topic's unordered top-word pairs, measured
/// against document-level co-occurrence in the reference collection.
///
/// Each topic list is truncated to its first `n` words; a topic with
/// fewer than two words has no pairs and scores zero.
pub fn npmi_coherence(
    topics: &[Vec<String>],
    reference: &[HashSet<String>],
    n: usize,
) -> CoherenceReport {
    let n_docs = reference.len();
    let df = |word: &str| reference.iter().filter(|doc| doc.contains(word)).count();
    let joint = |a: &str, b: &str| {
        reference.iter().filter(|doc| doc.contains(a) && doc.contains(b)).count()
    };

    let per_topic_npmi: Vec<f64> = topics
        .iter()
        .map(|words| {
            let words: Vec<&String> = words.iter().take(n).collect();
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..words.len() {
                for j in i + 1..words.len() {
                    sum += pair_npmi(df(words[i]), df(words[j]), joint(words[i], words[j]), n_docs);
                    pairs += 1;
                }
            }
            if pairs == 0 {
                0.0
            } else {
                sum / pairs as f64
            }
        })
        .collect();
    let mean_npmi = if per_topic_npmi.is_empty() {
        0.0
    } else {
        per_topic_npmi.iter().sum::<f64>() / per_topic_npmi.len() as f64
    };
    CoherenceReport { per_topic_npmi, mean_npmi, top_n: n }
}

/// Write the per-topic coherence table: topic id, score, and the words
/// that produced it.
pub fn write_coherence_tsv<W: Write>(
    out: &mut W,
    report: &CoherenceReport,
    topics: &[Vec<String>],
) -> io::Result<()> {
    writeln!(out, "topic_id\tnpmi\ttop_words")?;
    for (k, npmi) in report.per_topic_npmi.iter().enumerate() {
        let words: Vec<&str> =
            topics[k].iter().take(report.top_n).map(String::as_str).collect();
        writeln!(out, "{}\t{:.6}\t{}", k, npmi, words.join(" "))?;
    }
    Ok(())
}
