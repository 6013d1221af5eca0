//! Prepared-corpus directory layout: write once, reload for training.
//!
//! Files: `vocab.tsv` and `seq_vocab.tsv` (word, id, doc_freq), `docs.jsonl`
//! (one document per line), `split.json`, `labels.tsv` (id, name) and
//! `meta.json`. Everything is written in deterministic order so a rerun
//! with the same inputs is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CorpusError, CorpusMeta, Document, PreparedCorpus, Split, Vocabulary};

pub fn save_prepared(dir: &Path, corpus: &PreparedCorpus) -> Result<(), CorpusError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("vocab.tsv"), vocab_tsv(&corpus.vocab))?;
    fs::write(dir.join("seq_vocab.tsv"), vocab_tsv(&corpus.seq_vocab))?;

    let mut docs = String::new();
    for doc in &corpus.docs {
        docs.push_str(&serde_json::to_string(doc).expect("documents serialize"));
        docs.push('\n');
    }
    fs::write(dir.join("docs.jsonl"), docs)?;

    let split = serde_json::to_string_pretty(&corpus.split).expect("split serializes");
    fs::write(dir.join("split.json"), split + "\n")?;

    let mut labels = String::new();
    for (id, name) in corpus.labels.iter().enumerate() {
        writeln!(labels, "{}\t{}", id, name).expect("string write");
    }
    fs::write(dir.join("labels.tsv"), labels)?;

    let meta = serde_json::to_string_pretty(&corpus.meta).expect("meta serializes");
    fs::write(dir.join("meta.json"), meta + "\n")?;
    Ok(())
}

pub fn load_prepared(dir: &Path) -> Result<PreparedCorpus, CorpusError> {
    let vocab = parse_vocab_tsv(&fs::read_to_string(dir.join("vocab.tsv"))?)?;
    let seq_vocab = parse_vocab_tsv(&fs::read_to_string(dir.join("seq_vocab.tsv"))?)?;

    let mut docs = Vec::new();
    for (lineno, line) in fs::read_to_string(dir.join("docs.jsonl"))?.lines().enumerate() {
        let doc: Document = serde_json::from_str(line)
            .map_err(|e| CorpusError::Format(format!("docs.jsonl line {}: {}", lineno + 1, e)))?;
        docs.push(doc);
    }

    let split: Split = serde_json::from_str(&fs::read_to_string(dir.join("split.json"))?)
        .map_err(|e| CorpusError::Format(format!("split.json: {}", e)))?;

    let mut labels = Vec::new();
    for (lineno, line) in fs::read_to_string(dir.join("labels.tsv"))?.lines().enumerate() {
        let (id, name) = line
            .split_once('\t')
            .ok_or_else(|| CorpusError::Format(format!("labels.tsv line {}", lineno + 1)))?;
        if id.parse::<usize>() != Ok(labels.len()) {
            return Err(CorpusError::Format(format!("labels.tsv ids out of order at {}", lineno + 1)));
        }
        labels.push(name.to_owned());
    }

    let meta: CorpusMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| CorpusError::Format(format!("meta.json: {}", e)))?;

    if meta.v != vocab.len() || meta.v_seq != seq_vocab.len() || meta.c != labels.len() {
        return Err(CorpusError::Format("meta.json disagrees with vocabulary files".to_owned()));
    }
    let n = docs.len();
    if split.train.iter().chain(&split.dev).chain(&split.test).any(|&i| i >= n) {
        return Err(CorpusError::Format("split indexes a missing document".to_owned()));
    }
    Ok(PreparedCorpus { vocab, seq_vocab, docs, split, labels, meta })
}

fn vocab_tsv(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (id, word) in vocab.words().enumerate() {
        writeln!(out, "{}\t{}\t{}", word, id, vocab.doc_freq(id)).expect("string write");
    }
    out
}

fn parse_vocab_tsv(text: &str) -> Result<Vocabulary, CorpusError> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split('\t');
        let (word, id, freq) = (parts.next(), parts.next(), parts.next());
        let (Some(word), Some(id), Some(freq)) = (word, id, freq) else {
            return Err(CorpusError::Format(format!("vocab line {}: expected 3 columns", lineno + 1)));
        };
        if id.parse::<usize>() != Ok(lineno) {
            return Err(CorpusError::Format(format!("vocab line {}: ids out of order", lineno + 1)));
        }
        let freq: usize = freq
            .parse()
            .map_err(|_| CorpusError::Format(format!("vocab line {}: bad frequency", lineno + 1)))?;
        rows.push((word.to_owned(), freq));
    }
    Ok(Vocabulary::from_ordered(rows))
}
