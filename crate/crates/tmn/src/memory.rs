//! The topic memory mechanism.
//!
//! Each hop projects the topic-word kernel into a source memory S and a
//! target memory T (both `[K, E]`), scores every (topic, word) pair of
//! (S, embedded sequence U) through a shared sigmoid match, folds the
//! match strengths into the topic mixture, and emits a weighted copy of
//! T as the hop's output. Stacked hops feed each hop's summed output
//! back into the query sequence before the next hop runs.

use std::io::{self, Write};

use crate::tensor::{Tensor, TensorError, Var};

/// Tape handles for one hop's parameters.
///
/// `source_w`/`source_b` and `target_w`/`target_b` are the `[V, E]` / `[E]`
/// affine maps behind the two memories; `match_w` is the `[2E, 1]` scoring
/// map over a concatenated (topic row, word vector) pair and `match_b` its
/// one-element bias.
pub struct HopVars<'t> {
    pub source_w: Var<'t>,
    pub source_b: Var<'t>,
    pub target_w: Var<'t>,
    pub target_b: Var<'t>,
    pub match_w: Var<'t>,
    pub match_b: Var<'t>,
}

/// One hop's memories, built once per tape, plus the match parameters
/// that score against them.
pub struct HopMemories<'t> {
    /// `[K, E]` source memory.
    pub source: Var<'t>,
    /// `[K, E]` target memory.
    pub target: Var<'t>,
    pub match_w: Var<'t>,
    pub match_b: Var<'t>,
}

/// Everything the classifier needs after the hop stack has run.
pub struct MemoryReadout<'t> {
    /// `[K, E]` output representation of the last hop.
    pub r_final: Var<'t>,
    /// `[L, E]` query sequence after every inter-hop update.
    pub u_final: Var<'t>,
    /// One `[K, L]` match matrix per hop, in hop order.
    pub p_per_hop: Vec<Var<'t>>,
}

/// ReLU-activated projections of the topic-word kernel:
/// `S = relu(W_phi·source_w + source_b)` and likewise for T.
pub fn build_memories<'t>(
    w_phi: Var<'t>,
    hop: &HopVars<'t>,
) -> Result<HopMemories<'t>, TensorError> {
    let source = w_phi.matmul(hop.source_w)?.add_bias(hop.source_b)?.relu()?;
    let target = w_phi.matmul(hop.target_w)?.add_bias(hop.target_b)?.relu()?;
    Ok(HopMemories { source, target, match_w: hop.match_w, match_b: hop.match_b })
}

/// Sigmoid match strengths between every topic row and every word vector:
/// `P[k,l] = sigmoid(match_w·[S_k; U_l] + match_b)`.
///
/// The dot product against the concatenated pair splits into a source half
/// and a word half, so both halves are computed as matrix products and the
/// pairwise sums assembled afterwards.
pub fn match_scores<'t>(
    source: Var<'t>,
    u: Var<'t>,
    match_w: Var<'t>,
    match_b: Var<'t>,
) -> Result<Var<'t>, TensorError> {
    let e = source.shape()[1];
    let source_half = match_w.slice(0, 0, e)?;
    let word_half = match_w.slice(0, e, e)?;
    let k = source.shape()[0];
    let l = u.shape()[0];
    let source_scores = source.matmul(source_half)?.reshape(vec![k])?;
    let word_scores = u.matmul(word_half)?.reshape(vec![l])?;
    source_scores.outer_add(word_scores)?.add_scalar_var(match_b)?.sigmoid()
}

/// Integrated memory weights: `xi_k = theta_k + gamma·Σ_l P[k,l]`.
///
/// When a mask is given the sum skips masked-out columns, so padding
/// positions never contribute.
pub fn integrate<'t>(
    theta: Var<'t>,
    p: Var<'t>,
    gamma: f64,
    mask: Option<Var<'t>>,
) -> Result<Var<'t>, TensorError> {
    let k = p.shape()[0];
    let summed = match mask {
        Some(m) => p.mul(m)?.sum_axis(1)?,
        None => p.sum_axis(1)?,
    };
    theta.reshape(vec![k])?.add(summed.scale(gamma)?)
}

/// Output representation: row k of T scaled by `xi_k`.
pub fn memory_output<'t>(xi: Var<'t>, target: Var<'t>) -> Result<Var<'t>, TensorError> {
    target.scale_rows(xi)
}

/// Run a prebuilt hop stack over one instance.
///
/// Hop h scores its source memory against the current query U, integrates
/// with theta, and scales its target memory; between hops every query row
/// receives the summed output `Σ_k R_k`, so later hops see a sequence
/// shifted by what earlier hops read out. The final hop's R, the final
/// query, and every hop's match matrix come back together.
pub fn run_hops_with<'t>(
    memories: &[HopMemories<'t>],
    theta: Var<'t>,
    u: Var<'t>,
    gamma: f64,
    mask: Option<Var<'t>>,
) -> Result<MemoryReadout<'t>, TensorError> {
    if memories.is_empty() {
        return Err(TensorError::NoHops);
    }
    let mut query = u;
    let mut p_per_hop = Vec::with_capacity(memories.len());
    let mut r_final = None;
    for (h, hop) in memories.iter().enumerate() {
        let p = match_scores(hop.source, query, hop.match_w, hop.match_b)?;
        let xi = integrate(theta, p, gamma, mask)?;
        let r = memory_output(xi, hop.target)?;
        p_per_hop.push(p);
        if h + 1 < memories.len() {
            query = query.add_bias(r.sum_axis(0)?)?;
        }
        r_final = Some(r);
    }
    Ok(MemoryReadout { r_final: r_final.expect("at least one hop"), u_final: query, p_per_hop })
}

/// Build every hop's memories from the topic-word kernel, then run the
/// stack.
pub fn run_hops<'t>(
    theta: Var<'t>,
    u: Var<'t>,
    w_phi: Var<'t>,
    hops: &[HopVars<'t>],
    gamma: f64,
    mask: Option<Var<'t>>,
) -> Result<MemoryReadout<'t>, TensorError> {
    let memories = hops
        .iter()
        .map(|hop| build_memories(w_phi, hop))
        .collect::<Result<Vec<_>, _>>()?;
    run_hops_with(&memories, theta, u, gamma, mask)
}

/// Write one instance's mixture and match matrix as a two-block TSV.
///
/// The `# theta` block is a single labeled row of K values under topic
/// labels; the `# P` block is K labeled rows of L values under the
/// instance's tokens. All values are fixed-point with six decimals.
pub fn export_heatmap<W: Write>(
    out: &mut W,
    theta: &Tensor,
    p: &Tensor,
    topic_labels: &[String],
    tokens: &[String],
) -> io::Result<()> {
    let k = p.shape()[0];
    let l = p.shape()[1];
    assert_eq!(theta.numel(), k, "mixture length must match the match matrix");
    assert_eq!(topic_labels.len(), k, "one label per topic");
    assert_eq!(tokens.len(), l, "one token per match column");

    writeln!(out, "# theta")?;
    writeln!(out, "\t{}", topic_labels.join("\t"))?;
    let row: Vec<String> = theta.data().iter().map(|v| format!("{:.6}", v)).collect();
    writeln!(out, "theta\t{}", row.join("\t"))?;

    writeln!(out, "# P")?;
    writeln!(out, "\t{}", tokens.join("\t"))?;
    for topic in 0..k {
        let row: Vec<String> =
            (0..l).map(|col| format!("{:.6}", p.at2(topic, col))).collect();
        writeln!(out, "{}\t{}", topic_labels[topic], row.join("\t"))?;
    }
    Ok(())
}
