//! Trained-model persistence.
//!
//! A checkpoint is a JSON-lines file: a header line echoing the
//! configuration and corpus facts, one line per vocabulary, then one
//! line per parameter tensor in registration order. Numbers serialize
//! through the shortest round-trip decimal form, so saving the same
//! model twice produces identical bytes.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Architecture, TrainConfig, TrainMode};
use crate::corpus::Vocabulary;
use crate::model::{Model, ModelDims, TrainedModel};
use crate::tensor::{Tensor, TensorError};

const FORMAT: &str = "tmn-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("checkpoint is malformed: {0}")]
    Format(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    mode: TrainMode,
    arch: Architecture,
    config: TrainConfig,
    meta: HeaderMeta,
}

#[derive(Serialize, Deserialize)]
struct HeaderMeta {
    v: usize,
    v_seq: usize,
    c: usize,
    l_max: usize,
    labels: Vec<String>,
    majority_label: usize,
    lowercase: bool,
    binary_bow: bool,
}

#[derive(Serialize, Deserialize)]
struct VocabLine {
    vocab: String,
    rows: Vec<(String, usize)>,
}

#[derive(Serialize, Deserialize)]
struct ParamLine {
    param: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn vocab_rows(vocab: &Vocabulary) -> Vec<(String, usize)> {
    (0..vocab.len()).map(|id| (vocab.word(id).to_owned(), vocab.doc_freq(id))).collect()
}

/// Write the full model state as JSON lines.
pub fn save<W: Write>(out: &mut W, trained: &TrainedModel, mode: TrainMode) -> io::Result<()> {
    let model = &trained.model;
    let header = Header {
        format: FORMAT.to_owned(),
        version: VERSION,
        mode,
        arch: model.arch,
        config: model.config.clone(),
        meta: HeaderMeta {
            v: model.dims.v,
            v_seq: model.dims.v_seq,
            c: model.dims.c,
            l_max: model.dims.l_max,
            labels: trained.labels.clone(),
            majority_label: trained.majority_label,
            lowercase: trained.lowercase,
            binary_bow: trained.binary_bow,
        },
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for (name, vocab) in [("bow", &trained.vocab), ("seq", &trained.seq_vocab)] {
        let line = VocabLine { vocab: name.to_owned(), rows: vocab_rows(vocab) };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    for id in model.store.ids() {
        let value = model.store.value(id);
        let line = ParamLine {
            param: model.store.name(id).to_owned(),
            shape: value.shape().to_vec(),
            data: value.data().to_vec(),
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

/// Save to a file, creating or truncating it.
pub fn save_file(path: &Path, trained: &TrainedModel, mode: TrainMode) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    save(&mut out, trained, mode)?;
    out.flush()
}

/// Read a checkpoint back into a usable model.
///
/// Every parameter registered by the configuration must appear exactly
/// once with its registered shape; anything else is a format error.
pub fn load<R: BufRead>(input: R) -> Result<(TrainedModel, TrainMode), CheckpointError> {
    let mut lines = input.lines().enumerate();
    let mut next_line = |what: &str| -> Result<(usize, String), CheckpointError> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?)),
            None => Err(CheckpointError::Format(format!("missing {what}"))),
        }
    };

    let (lineno, text) = next_line("header line")?;
    let header: Header =
        serde_json::from_str(&text).map_err(|source| CheckpointError::Json { line: lineno, source })?;
    if header.format != FORMAT {
        return Err(CheckpointError::Format(format!("unrecognized format {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {} (expected {})",
            header.version, VERSION
        )));
    }

    let mut read_vocab = |expect: &str| -> Result<Vocabulary, CheckpointError> {
        let (lineno, text) = next_line("vocabulary line")?;
        let line: VocabLine = serde_json::from_str(&text)
            .map_err(|source| CheckpointError::Json { line: lineno, source })?;
        if line.vocab != expect {
            return Err(CheckpointError::Format(format!(
                "expected the {expect} vocabulary, found {:?}",
                line.vocab
            )));
        }
        Ok(Vocabulary::from_ordered(line.rows))
    };
    let vocab = read_vocab("bow")?;
    let seq_vocab = read_vocab("seq")?;

    let meta = header.meta;
    if vocab.len() != meta.v || seq_vocab.len() != meta.v_seq {
        return Err(CheckpointError::Format(format!(
            "vocabulary sizes {}/{} disagree with the header's {}/{}",
            vocab.len(),
            seq_vocab.len(),
            meta.v,
            meta.v_seq
        )));
    }
    if meta.labels.len() != meta.c || meta.majority_label >= meta.c {
        return Err(CheckpointError::Format("label table disagrees with class count".to_owned()));
    }

    let dims = ModelDims { v: meta.v, v_seq: meta.v_seq, c: meta.c, l_max: meta.l_max };
    header.config.validate().map_err(CheckpointError::Format)?;
    let mut model = Model::new(header.config, dims, header.arch);

    let mut seen = vec![false; model.store.len()];
    for (i, line) in lines {
        let text = line?;
        let parsed: ParamLine = serde_json::from_str(&text)
            .map_err(|source| CheckpointError::Json { line: i + 1, source })?;
        let id = model.store.id(&parsed.param).ok_or_else(|| {
            CheckpointError::Format(format!("unknown parameter {:?}", parsed.param))
        })?;
        let expected = model.store.value(id).shape().to_vec();
        if parsed.shape != expected {
            return Err(CheckpointError::Format(format!(
                "parameter {:?} has shape {:?}, expected {:?}",
                parsed.param, parsed.shape, expected
            )));
        }
        let index = model.store.ids().position(|other| other == id).unwrap();
        if seen[index] {
            return Err(CheckpointError::Format(format!(
                "parameter {:?} appears twice",
                parsed.param
            )));
        }
        seen[index] = true;
        model.store.set_value(id, Tensor::new(parsed.shape, parsed.data)?);
    }
    if let Some(index) = seen.iter().position(|&s| !s) {
        let name = model.store.name(model.store.ids().nth(index).unwrap()).to_owned();
        return Err(CheckpointError::Format(format!("parameter {name:?} is missing")));
    }

    let trained = TrainedModel {
        model,
        vocab,
        seq_vocab,
        labels: meta.labels,
        majority_label: meta.majority_label,
        lowercase: meta.lowercase,
        binary_bow: meta.binary_bow,
    };
    Ok((trained, header.mode))
}

/// Load from a file path.
pub fn load_file(path: &Path) -> Result<(TrainedModel, TrainMode), CheckpointError> {
    load(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_trained(seed: u64, arch: Architecture) -> TrainedModel {
        let config = TrainConfig {
            k: 2,
            hops: 2,
            e: 4,
            h_e: 5,
            cnn_features: 6,
            filter_widths: vec![1, 2],
            seed,
            ..Default::default()
        };
        let dims = ModelDims { v: 6, v_seq: 8, c: 2, l_max: 4 };
        let model = Model::new(config, dims, arch);
        let words = ["apple", "ball", "cat", "drum", "echo", "fog"];
        let vocab =
            Vocabulary::from_ordered(words.iter().map(|w| (w.to_string(), 2)).collect());
        let mut seq_rows = vec![("<pad>".to_owned(), 0), ("<unk>".to_owned(), 0)];
        seq_rows.extend(words.iter().map(|w| (w.to_string(), 2)));
        TrainedModel {
            model,
            vocab,
            seq_vocab: Vocabulary::from_ordered(seq_rows),
            labels: vec!["left".to_owned(), "right".to_owned()],
            majority_label: 1,
            lowercase: true,
            binary_bow: false,
        }
    }

    fn save_bytes(trained: &TrainedModel, mode: TrainMode) -> Vec<u8> {
        let mut buf = Vec::new();
        save(&mut buf, trained, mode).unwrap();
        buf
    }

    #[test]
    fn round_trip_preserves_every_parameter_bit() {
        let trained = tiny_trained(9, Architecture::TopicMemory);
        let bytes = save_bytes(&trained, TrainMode::Joint);
        let (loaded, mode) = load(&bytes[..]).unwrap();

        assert_eq!(mode, TrainMode::Joint);
        assert_eq!(loaded.model.config, trained.model.config);
        assert_eq!(loaded.model.arch, trained.model.arch);
        assert_eq!(loaded.model.store.len(), trained.model.store.len());
        for (a, b) in trained.model.store.ids().zip(loaded.model.store.ids()) {
            assert_eq!(trained.model.store.name(a), loaded.model.store.name(b));
            assert_eq!(
                trained.model.store.value(a).data(),
                loaded.model.store.value(b).data(),
                "parameter {}",
                trained.model.store.name(a)
            );
        }
        assert_eq!(loaded.vocab, trained.vocab);
        assert_eq!(loaded.seq_vocab, trained.seq_vocab);
        assert_eq!(loaded.labels, trained.labels);
        assert_eq!(loaded.majority_label, 1);
    }

    #[test]
    fn saving_twice_yields_identical_bytes() {
        let trained = tiny_trained(10, Architecture::TopicMemory);
        assert_eq!(save_bytes(&trained, TrainMode::Joint), save_bytes(&trained, TrainMode::Joint));
    }

    #[test]
    fn predictions_survive_a_round_trip() {
        let trained = tiny_trained(11, Architecture::TopicMemory);
        let bytes = save_bytes(&trained, TrainMode::Joint);
        let (loaded, _) = load(&bytes[..]).unwrap();
        let before = trained.predict("apple ball cat").unwrap();
        let after = loaded.predict("apple ball cat").unwrap();
        assert_eq!(before.label, after.label);
        assert_eq!(before.probs, after.probs);
        assert_eq!(before.theta, after.theta);
    }

    #[test]
    fn the_ablation_architecture_round_trips_too() {
        let trained = tiny_trained(12, Architecture::ThetaConcat);
        let bytes = save_bytes(&trained, TrainMode::Separate);
        let (loaded, mode) = load(&bytes[..]).unwrap();
        assert_eq!(mode, TrainMode::Separate);
        assert_eq!(loaded.model.arch, Architecture::ThetaConcat);
        assert_eq!(loaded.model.store.len(), trained.model.store.len());
    }

    #[test]
    fn hop_count_is_echoed_through_the_file() {
        let mut trained = tiny_trained(13, Architecture::TopicMemory);
        trained.model.config.hops = 2;
        let (loaded, _) = load(&save_bytes(&trained, TrainMode::Joint)[..]).unwrap();
        assert_eq!(loaded.model.config.hops, 2);
    }

    #[test]
    fn unrecognized_format_is_rejected() {
        let trained = tiny_trained(14, Architecture::TopicMemory);
        let text = String::from_utf8(save_bytes(&trained, TrainMode::Joint)).unwrap();
        let bad = text.replacen("tmn-checkpoint", "something-else", 1);
        match load(bad.as_bytes()) {
            Err(CheckpointError::Format(msg)) => assert!(msg.contains("format")),
            other => panic!("expected a format error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn future_versions_are_rejected() {
        let trained = tiny_trained(15, Architecture::TopicMemory);
        let text = String::from_utf8(save_bytes(&trained, TrainMode::Joint)).unwrap();
        let bad = text.replacen("\"version\":1", "\"version\":2", 1);
        match load(bad.as_bytes()) {
            Err(CheckpointError::Format(msg)) => assert!(msg.contains("version")),
            other => panic!("expected a version error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn a_truncated_file_names_the_missing_parameter() {
        let trained = tiny_trained(16, Architecture::TopicMemory);
        let text = String::from_utf8(save_bytes(&trained, TrainMode::Joint)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let truncated = lines[..lines.len() - 1].join("\n");
        match load(truncated.as_bytes()) {
            Err(CheckpointError::Format(msg)) => assert!(msg.contains("missing"), "{msg}"),
            other => panic!("expected a format error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn a_shape_mismatch_is_rejected() {
        let trained = tiny_trained(17, Architecture::TopicMemory);
        let text = String::from_utf8(save_bytes(&trained, TrainMode::Joint)).unwrap();
        let bad = text.replacen("\"shape\":[6,5]", "\"shape\":[5,6]", 1);
        assert_ne!(bad, text, "expected the encoder weight shape in the file");
        match load(bad.as_bytes()) {
            Err(CheckpointError::Format(msg)) => assert!(msg.contains("shape"), "{msg}"),
            other => panic!("expected a format error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn garbage_json_reports_its_line_number() {
        let trained = tiny_trained(18, Architecture::TopicMemory);
        let mut text = String::from_utf8(save_bytes(&trained, TrainMode::Joint)).unwrap();
        text.push_str("{not json\n");
        let line_count = text.lines().count();
        match load(text.as_bytes()) {
            Err(CheckpointError::Json { line, .. }) => assert_eq!(line, line_count),
            other => panic!("expected a json error, got {:?}", other.map(|_| ())),
        }
    }
}
