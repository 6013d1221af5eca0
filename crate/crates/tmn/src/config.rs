//! Training configuration and mode flags.

use serde::{Deserialize, Serialize};

/// Whether topic model and classifier learn together or in sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One loss, every parameter updated each step.
    Joint,
    /// Topic model first to convergence, then classifier with the topic
    /// model frozen.
    Separate,
}

/// Which network the classifier end runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Topic memory: match topics against embeddings, classify [R; U].
    TopicMemory,
    /// Ablation baseline: pool the CNN over embeddings alone and append
    /// the topic mixture to the pooled feature vector.
    ThetaConcat,
}

/// Everything the training loop needs to know.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Trade-off weight on the classification loss.
    pub lambda: f64,
    /// Memory coefficient weighting matched topics in the mixture update.
    pub gamma: f64,
    /// Topic count.
    pub k: usize,
    /// Memory hop count.
    pub hops: usize,
    /// Embedding size shared by word embeddings and topic memories.
    pub e: usize,
    /// Encoder hidden layer size.
    pub h_e: usize,
    /// Total convolution feature maps, divided across filter widths.
    pub cnn_features: usize,
    pub filter_widths: Vec<usize>,
    pub epochs: usize,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    /// Epochs over which the divergence term's weight ramps linearly from
    /// zero to one, easing the topic mixture away from an early collapse
    /// into the prior. Zero disables the ramp. The logged and evaluated
    /// losses always use the full weight.
    pub kl_warmup_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Whether the topic-word decoder carries a bias vector.
    pub decoder_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            gamma: 0.8,
            k: 50,
            hops: 5,
            e: 200,
            h_e: 256,
            cnn_features: 500,
            filter_widths: vec![1, 2, 3],
            epochs: 800,
            patience: 20,
            kl_warmup_epochs: 0,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 42,
            decoder_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambda < 0.0 {
            return Err(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.gamma < 0.0 {
            return Err(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.k < 1 {
            return Err("topic count must be >= 1".to_owned());
        }
        if self.hops < 1 {
            return Err("hop count must be >= 1".to_owned());
        }
        if self.e < 1 || self.h_e < 1 {
            return Err("embedding and hidden sizes must be >= 1".to_owned());
        }
        if self.filter_widths.is_empty() {
            return Err("at least one filter width is required".to_owned());
        }
        if self.cnn_features < self.filter_widths.len() {
            return Err(format!(
                "{} feature maps cannot cover {} filter widths",
                self.cnn_features,
                self.filter_widths.len()
            ));
        }
        if self.batch_size < 1 || self.epochs < 1 {
            return Err("batch size and epochs must be >= 1".to_owned());
        }
        if !(self.learning_rate > 0.0) {
            return Err(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        Ok(())
    }

    /// Feature maps per filter width: as even as possible, first widths
    /// absorb the remainder, total exactly `cnn_features`.
    pub fn features_per_width(&self) -> Vec<usize> {
        let n = self.filter_widths.len();
        let base = self.cnn_features / n;
        let extra = self.cnn_features % n;
        (0..n).map(|i| base + usize::from(i < extra)).collect()
    }
}
