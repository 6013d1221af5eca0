//! The convolutional classifier over memory output and word embeddings.
//!
//! The memory readout R and the embedded sequence U are stacked along the
//! sequence axis into one `[K+L, E]` block; filter banks of several widths
//! slide over it, each feature map is max-pooled over time, and the pooled
//! features feed an affine map with a softmax over class labels.

use std::io::{self, BufRead};

use crate::corpus::{Vocabulary, PAD};
use crate::tensor::{Tensor, TensorError, Var};

/// One width's filter bank.
pub struct ConvBank<'t> {
    pub width: usize,
    /// `[F, width, E]` filters.
    pub filters: Var<'t>,
    /// `[F]` bias.
    pub bias: Var<'t>,
}

/// Tape handles for every classifier parameter.
pub struct ClassifierVars<'t> {
    /// `[V_seq, E]` word embedding table.
    pub embedding: Var<'t>,
    pub banks: Vec<ConvBank<'t>>,
    /// `[F_total, C]` (or `[F_total + K, C]` when the mixture is
    /// concatenated directly) output map.
    pub dense_w: Var<'t>,
    /// `[C]` output bias.
    pub dense_b: Var<'t>,
}

/// Class distribution in both plain and log space, from shared logits.
pub struct ClassOutput<'t> {
    pub probs: Var<'t>,
    pub log_probs: Var<'t>,
}

/// Look up the word sequence as embedding rows, padded or truncated to
/// exactly `l_max` positions.
///
/// Padding positions map to the zero vector and receive no gradient.
pub fn embed<'t>(
    seq: &[usize],
    l_max: usize,
    embedding: Var<'t>,
) -> Result<Var<'t>, TensorError> {
    let mut indices = Vec::with_capacity(l_max);
    indices.extend(seq.iter().take(l_max).copied());
    indices.resize(l_max, PAD);
    embedding.gather_rows(&indices, Some(PAD))
}

/// Convolve and max-pool one sequence block through every bank, returning
/// one pooled `[F]` vector per bank.
fn conv_pool<'t>(
    block: Var<'t>,
    params: &ClassifierVars<'t>,
) -> Result<Vec<Var<'t>>, TensorError> {
    params
        .banks
        .iter()
        .map(|bank| block.conv1d(bank.filters, bank.bias)?.max_axis(0))
        .collect()
}

/// Affine map and softmax over a `[1, F]` feature row.
fn dense_softmax<'t>(
    features: Var<'t>,
    params: &ClassifierVars<'t>,
) -> Result<ClassOutput<'t>, TensorError> {
    let logits = features.matmul(params.dense_w)?.add_bias(params.dense_b)?;
    Ok(ClassOutput { probs: logits.softmax(1)?, log_probs: logits.log_softmax(1)? })
}

/// Classify from the memory readout: `[R; U]` stacked along the sequence
/// axis feeds the convolutional stack.
pub fn classify<'t>(
    r: Var<'t>,
    u: Var<'t>,
    params: &ClassifierVars<'t>,
) -> Result<ClassOutput<'t>, TensorError> {
    let tape = r.tape();
    let block = tape.concat(&[r, u], 0)?;
    let pooled = conv_pool(block, params)?;
    let f_total: usize = pooled.iter().map(|p| p.shape()[0]).sum();
    let features = tape.concat(&pooled, 0)?.reshape(vec![1, f_total])?;
    dense_softmax(features, params)
}

/// Baseline head that skips the memory: the convolutional stack sees only
/// the embedded sequence and the raw topic mixture joins the pooled
/// features directly.
pub fn classify_with_mixture<'t>(
    theta: Var<'t>,
    u: Var<'t>,
    params: &ClassifierVars<'t>,
) -> Result<ClassOutput<'t>, TensorError> {
    let tape = u.tape();
    let pooled = conv_pool(u, params)?;
    let k = theta.shape().iter().product();
    let mut parts = pooled;
    parts.push(theta.reshape(vec![k])?);
    let f_total: usize = parts.iter().map(|p| p.shape()[0]).sum();
    let features = tape.concat(&parts, 0)?.reshape(vec![1, f_total])?;
    dense_softmax(features, params)
}

/// Cross-entropy against the gold label: `−log p[y]`.
pub fn cls_loss<'t>(output: &ClassOutput<'t>, y: usize) -> Result<Var<'t>, TensorError> {
    output.log_probs.slice(1, y, 1)?.sum_all()?.scale(-1.0)
}

/// The full objective: topic-model loss plus `lambda` times the
/// classification loss.
pub fn joint_loss<'t>(
    ntm_loss: Var<'t>,
    cls_loss: Var<'t>,
    lambda: f64,
) -> Result<Var<'t>, TensorError> {
    ntm_loss.add(cls_loss.scale(lambda)?)
}

/// Overwrite embedding rows from a pre-trained text file, one
/// `word v1 v2 ... vE` line per word.
///
/// Words missing from the vocabulary are skipped; the padding row is
/// never touched. Returns how many rows were set.
pub fn apply_pretrained<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    embedding: &mut Tensor,
) -> io::Result<usize> {
    let e = embedding.shape()[1];
    let mut applied = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line has a first field");
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("line {}: bad number {:?}", lineno + 1, p),
                    )
                })
            })
            .collect::<io::Result<_>>()?;
        if values.len() != e {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: {} values, embedding width {}", lineno + 1, values.len(), e),
            ));
        }
        let Some(id) = vocab.id(word) else { continue };
        if id == PAD {
            continue;
        }
        let data = embedding.data_mut();
        data[id * e..(id + 1) * e].copy_from_slice(&values);
        applied += 1;
    }
    Ok(applied)
}
