//! The neural topic model.
//!
//! A document's bag-of-words vector is encoded into the mean and log
//! standard deviation of a Gaussian over a latent vector z; a draw from
//! that Gaussian (by reparameterization, so gradients reach the encoder)
//! is mapped through a softmax to the topic mixture θ; the decoder turns
//! θ back into a distribution over vocabulary words. The loss is the
//! negative variational lower bound: a closed-form KL to the standard
//! normal prior plus the bag-of-words reconstruction term.

use crate::corpus::Vocabulary;
use crate::tensor::{Tensor, TensorError, Var};

/// Predicted log standard deviations are kept inside ±this bound so the
/// later exponential cannot overflow.
pub const LOG_SIGMA_BOUND: f64 = 8.0;

/// Tape handles for every topic-model parameter.
///
/// `w_phi` is the topic-word kernel: row k of this `[K, V]` matrix scores
/// every vocabulary word for topic k, and the memory module reads it
/// directly.
pub struct NtmVars<'t> {
    pub w_e: Var<'t>,
    pub b_e: Var<'t>,
    pub w_mu: Var<'t>,
    pub b_mu: Var<'t>,
    pub w_sigma: Var<'t>,
    pub b_sigma: Var<'t>,
    pub w_theta: Var<'t>,
    pub b_theta: Var<'t>,
    pub w_phi: Var<'t>,
    pub b_phi: Option<Var<'t>>,
}

/// Per-instance latent state handles.
pub struct TopicState<'t> {
    pub mu: Var<'t>,
    pub log_sigma: Var<'t>,
    pub z: Var<'t>,
    /// `[1, K]` mixture on the simplex.
    pub theta: Var<'t>,
}

/// Decoder output in both plain and log space. Both views come from the
/// same logits; the log view exists so the reconstruction loss never
/// takes a log of an underflowed probability.
pub struct Decoded<'t> {
    pub probs: Var<'t>,
    pub log_probs: Var<'t>,
}

/// Gaussian parameters from a `[1, V]` bag-of-words vector.
pub fn encode<'t>(bow: Var<'t>, p: &NtmVars<'t>) -> Result<(Var<'t>, Var<'t>), TensorError> {
    let hidden = bow.matmul(p.w_e)?.add_bias(p.b_e)?.relu()?;
    let mu = hidden.matmul(p.w_mu)?.add_bias(p.b_mu)?;
    let log_sigma = hidden
        .matmul(p.w_sigma)?
        .add_bias(p.b_sigma)?
        .clamp(-LOG_SIGMA_BOUND, LOG_SIGMA_BOUND)?;
    Ok((mu, log_sigma))
}

/// `z = mu + exp(log_sigma) ⊙ eps`, differentiable in mu and log_sigma.
pub fn reparameterize<'t>(
    mu: Var<'t>,
    log_sigma: Var<'t>,
    eps: Var<'t>,
) -> Result<Var<'t>, TensorError> {
    mu.add(log_sigma.exp()?.mul(eps)?)
}

/// Topic mixture `theta = softmax(f_theta(z))`, a `[1, K]` simplex row.
pub fn topic_mixture<'t>(z: Var<'t>, p: &NtmVars<'t>) -> Result<Var<'t>, TensorError> {
    z.matmul(p.w_theta)?.add_bias(p.b_theta)?.softmax(1)
}

/// Word distribution from the mixture.
pub fn decode<'t>(theta: Var<'t>, p: &NtmVars<'t>) -> Result<Decoded<'t>, TensorError> {
    let mut logits = theta.matmul(p.w_phi)?;
    if let Some(b_phi) = p.b_phi {
        logits = logits.add_bias(b_phi)?;
    }
    Ok(Decoded { probs: logits.softmax(1)?, log_probs: logits.log_softmax(1)? })
}

/// Closed-form KL divergence from N(mu, sigma²) to the standard normal:
/// `½ Σ_k (mu_k² + sigma_k² − 2·log sigma_k − 1)`.
pub fn kl_term<'t>(mu: Var<'t>, log_sigma: Var<'t>) -> Result<Var<'t>, TensorError> {
    let k = mu.shape().iter().product::<usize>() as f64;
    let mu_sq = mu.mul(mu)?.sum_all()?;
    let sigma_sq = log_sigma.scale(2.0)?.exp()?.sum_all()?;
    let log_sigma_sum = log_sigma.sum_all()?;
    mu_sq.add(sigma_sq)?.sub(log_sigma_sum.scale(2.0)?)?.add_scalar(-k)?.scale(0.5)
}

/// Negative expected log likelihood of the observed counts:
/// `−Σ_v bow_v · log p_w,v`.
pub fn reconstruction_term<'t>(bow: Var<'t>, decoded: &Decoded<'t>) -> Result<Var<'t>, TensorError> {
    bow.mul(decoded.log_probs)?.sum_all()?.scale(-1.0)
}

/// The topic model's loss: KL plus reconstruction.
pub fn ntm_loss<'t>(
    bow: Var<'t>,
    mu: Var<'t>,
    log_sigma: Var<'t>,
    decoded: &Decoded<'t>,
) -> Result<Var<'t>, TensorError> {
    kl_term(mu, log_sigma)?.add(reconstruction_term(bow, decoded)?)
}

/// The `n` strongest words of one topic by decoder weight, descending,
/// ties broken lexicographically; asking past the vocabulary clamps.
pub fn top_words(w_phi: &Tensor, vocab: &Vocabulary, topic: usize, n: usize) -> Vec<String> {
    let v = w_phi.shape()[1];
    let mut order: Vec<usize> = (0..v).collect();
    order.sort_by(|&a, &b| {
        w_phi
            .at2(topic, b)
            .partial_cmp(&w_phi.at2(topic, a))
            .expect("finite weights")
            .then_with(|| vocab.word(a).cmp(vocab.word(b)))
    });
    order.into_iter().take(n).map(|i| vocab.word(i).to_owned()).collect()
}
