//! Parameter registration, initialization, and the per-instance forward
//! pass that ties the topic model, the memory hops, and the classifier
//! together.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::classifier::{self, ClassOutput, ClassifierVars, ConvBank};
use crate::config::{Architecture, TrainConfig};
use crate::corpus::{Document, Vocabulary, UNK};
use crate::memory::{self, HopMemories, HopVars};
use crate::ntm::{self, NtmVars};
use crate::rng::named_stream;
use crate::tensor::{Binding, ParamId, ParamStore, Tape, Tensor, TensorError, Var};

/// Corpus-derived sizes the parameter shapes depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Bag-of-words vocabulary size.
    pub v: usize,
    /// Sequence vocabulary size (with padding and unknown rows).
    pub v_seq: usize,
    /// Number of class labels.
    pub c: usize,
    /// Fixed sequence window length.
    pub l_max: usize,
}

struct NtmIds {
    w_e: ParamId,
    b_e: ParamId,
    w_mu: ParamId,
    b_mu: ParamId,
    w_sigma: ParamId,
    b_sigma: ParamId,
    w_theta: ParamId,
    b_theta: ParamId,
    w_phi: ParamId,
    b_phi: Option<ParamId>,
}

struct HopIds {
    source_w: ParamId,
    source_b: ParamId,
    target_w: ParamId,
    target_b: ParamId,
    match_w: ParamId,
    match_b: ParamId,
}

struct ClsIds {
    embedding: ParamId,
    banks: Vec<(usize, ParamId, ParamId)>,
    dense_w: ParamId,
    dense_b: ParamId,
}

/// The full parameter set plus everything needed to rebuild it.
pub struct Model {
    pub config: TrainConfig,
    pub dims: ModelDims,
    pub arch: Architecture,
    pub store: ParamStore,
    ntm: NtmIds,
    hops: Vec<HopIds>,
    cls: ClsIds,
}

impl Model {
    /// Register every parameter and initialize it from the seed's "init"
    /// stream: uniform Glorot fan-in/fan-out ranges for weight matrices,
    /// zero biases, and a small uniform range for the embedding table
    /// with a zeroed padding row.
    pub fn new(config: TrainConfig, dims: ModelDims, arch: Architecture) -> Model {
        let mut store = ParamStore::new();
        let k = config.k;
        let e = config.e;
        let h_e = config.h_e;

        let ntm = NtmIds {
            w_e: store.register("ntm/w_e", Tensor::zeros(vec![dims.v, h_e])),
            b_e: store.register("ntm/b_e", Tensor::zeros(vec![h_e])),
            w_mu: store.register("ntm/w_mu", Tensor::zeros(vec![h_e, k])),
            b_mu: store.register("ntm/b_mu", Tensor::zeros(vec![k])),
            w_sigma: store.register("ntm/w_sigma", Tensor::zeros(vec![h_e, k])),
            b_sigma: store.register("ntm/b_sigma", Tensor::zeros(vec![k])),
            w_theta: store.register("ntm/w_theta", Tensor::zeros(vec![k, k])),
            b_theta: store.register("ntm/b_theta", Tensor::zeros(vec![k])),
            w_phi: store.register("ntm/w_phi", Tensor::zeros(vec![k, dims.v])),
            b_phi: config
                .decoder_bias
                .then(|| store.register("ntm/b_phi", Tensor::zeros(vec![dims.v]))),
        };

        let hops = match arch {
            Architecture::TopicMemory => (0..config.hops)
                .map(|h| HopIds {
                    source_w: store
                        .register(&format!("hop{h}/source_w"), Tensor::zeros(vec![dims.v, e])),
                    source_b: store.register(&format!("hop{h}/source_b"), Tensor::zeros(vec![e])),
                    target_w: store
                        .register(&format!("hop{h}/target_w"), Tensor::zeros(vec![dims.v, e])),
                    target_b: store.register(&format!("hop{h}/target_b"), Tensor::zeros(vec![e])),
                    match_w: store
                        .register(&format!("hop{h}/match_w"), Tensor::zeros(vec![2 * e, 1])),
                    match_b: store.register(&format!("hop{h}/match_b"), Tensor::scalar(0.0)),
                })
                .collect(),
            Architecture::ThetaConcat => Vec::new(),
        };

        let features = config.features_per_width();
        let banks = config
            .filter_widths
            .iter()
            .zip(&features)
            .map(|(&w, &f)| {
                let filters = store
                    .register(&format!("cls/conv{w}_filters"), Tensor::zeros(vec![f, w, e]));
                let bias = store.register(&format!("cls/conv{w}_bias"), Tensor::zeros(vec![f]));
                (w, filters, bias)
            })
            .collect::<Vec<_>>();
        let f_total: usize = features.iter().sum();
        let dense_in = match arch {
            Architecture::TopicMemory => f_total,
            Architecture::ThetaConcat => f_total + k,
        };
        let cls = ClsIds {
            embedding: store.register("cls/embedding", Tensor::zeros(vec![dims.v_seq, e])),
            banks,
            dense_w: store.register("cls/dense_w", Tensor::zeros(vec![dense_in, dims.c])),
            dense_b: store.register("cls/dense_b", Tensor::zeros(vec![dims.c])),
        };

        let mut model = Model { config, dims, arch, store, ntm, hops, cls };
        model.initialize();
        model
    }

    pub(crate) fn initialize(&mut self) {
        let mut rng = named_stream(self.config.seed, "init");
        for id in self.store.ids().collect::<Vec<_>>() {
            let name = self.store.name(id).to_owned();
            let shape = self.store.value(id).shape().to_vec();
            let tensor = if name.ends_with("_b")
                || name.ends_with("/b_e")
                || name.contains("/b_")
                || name.ends_with("_bias")
            {
                Tensor::zeros(shape)
            } else if name == "cls/embedding" {
                let mut t = uniform_tensor(&mut rng, &shape, 0.1);
                let e = shape[1];
                t.data_mut()[..e].fill(0.0);
                t
            } else {
                let (fan_in, fan_out) = match shape.len() {
                    3 => (shape[1] * shape[2], shape[0]),
                    2 => (shape[0], shape[1]),
                    _ => (shape.iter().product(), 1),
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                uniform_tensor(&mut rng, &shape, limit)
            };
            self.store.set_value(id, tensor);
        }
    }

    /// Names of every topic-model parameter, the set frozen by two-phase
    /// training.
    pub fn ntm_param_ids(&self) -> Vec<ParamId> {
        let n = &self.ntm;
        let mut ids = vec![
            n.w_e, n.b_e, n.w_mu, n.b_mu, n.w_sigma, n.b_sigma, n.w_theta, n.b_theta, n.w_phi,
        ];
        ids.extend(n.b_phi);
        ids
    }

    /// The topic-word kernel's current value.
    pub fn w_phi(&self) -> Tensor {
        self.store.value(self.ntm.w_phi).clone()
    }

    pub(crate) fn embedding_param(&self) -> ParamId {
        self.cls.embedding
    }

    /// Mount every parameter on a tape and prebuild the per-tape pieces
    /// shared across instances (the hop memories, which depend only on
    /// parameters).
    pub fn bind<'t>(&self, tape: &'t Tape) -> Result<BoundModel<'t>, TensorError> {
        let binding = Binding::mount(tape, &self.store);
        let n = &self.ntm;
        let ntm = NtmVars {
            w_e: binding.var(n.w_e),
            b_e: binding.var(n.b_e),
            w_mu: binding.var(n.w_mu),
            b_mu: binding.var(n.b_mu),
            w_sigma: binding.var(n.w_sigma),
            b_sigma: binding.var(n.b_sigma),
            w_theta: binding.var(n.w_theta),
            b_theta: binding.var(n.b_theta),
            w_phi: binding.var(n.w_phi),
            b_phi: n.b_phi.map(|id| binding.var(id)),
        };
        let memories = self
            .hops
            .iter()
            .map(|h| {
                let vars = HopVars {
                    source_w: binding.var(h.source_w),
                    source_b: binding.var(h.source_b),
                    target_w: binding.var(h.target_w),
                    target_b: binding.var(h.target_b),
                    match_w: binding.var(h.match_w),
                    match_b: binding.var(h.match_b),
                };
                memory::build_memories(ntm.w_phi, &vars)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cls = ClassifierVars {
            embedding: binding.var(self.cls.embedding),
            banks: self
                .cls
                .banks
                .iter()
                .map(|&(width, f, b)| ConvBank {
                    width,
                    filters: binding.var(f),
                    bias: binding.var(b),
                })
                .collect(),
            dense_w: binding.var(self.cls.dense_w),
            dense_b: binding.var(self.cls.dense_b),
        };
        Ok(BoundModel {
            tape,
            binding,
            ntm,
            memories,
            cls,
            arch: self.arch,
            gamma: self.config.gamma,
            k: self.config.k,
            l_max: self.dims.l_max,
            v: self.dims.v,
        })
    }
}

fn uniform_tensor(rng: &mut ChaCha20Rng, shape: &[usize], limit: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

/// A model mounted on one tape, ready to run instances.
pub struct BoundModel<'t> {
    tape: &'t Tape,
    pub binding: Binding<'t>,
    pub ntm: NtmVars<'t>,
    memories: Vec<HopMemories<'t>>,
    pub cls: ClassifierVars<'t>,
    arch: Architecture,
    gamma: f64,
    k: usize,
    l_max: usize,
    v: usize,
}

/// Every per-instance quantity later stages need.
pub struct ForwardPass<'t> {
    /// Topic-model loss; exactly zero for degenerate (empty bag) docs.
    pub ntm_loss: Var<'t>,
    /// The divergence half of the topic-model loss, kept separate so the
    /// training loop can anneal its weight.
    pub kl: Var<'t>,
    /// The reconstruction half of the topic-model loss.
    pub recon: Var<'t>,
    pub output: ClassOutput<'t>,
    /// `[1, K]` topic mixture.
    pub theta: Var<'t>,
    /// One `[K, l_max]` match matrix per hop (empty for the mixture-only
    /// head).
    pub p_per_hop: Vec<Var<'t>>,
}

impl<'t> BoundModel<'t> {
    /// Run one document through the full network.
    ///
    /// `eps` is the reparameterization noise, one value per latent
    /// coordinate; `None` means deterministic inference (`z = mu`).
    pub fn forward(
        &self,
        doc: &Document,
        eps: Option<&Tensor>,
    ) -> Result<ForwardPass<'t>, TensorError> {
        let bow = self.tape.constant(dense_bow(&doc.bow, self.v));
        let (mu, log_sigma) = ntm::encode(bow, &self.ntm)?;
        let z = match eps {
            Some(noise) => ntm::reparameterize(mu, log_sigma, self.tape.constant(noise.clone()))?,
            None => mu,
        };
        let theta = ntm::topic_mixture(z, &self.ntm)?;

        let (kl, recon) = if doc.is_degenerate() {
            let zero = self.tape.constant(Tensor::scalar(0.0));
            (zero, zero)
        } else {
            let decoded = ntm::decode(theta, &self.ntm)?;
            let kl = ntm::kl_term(mu, log_sigma)?;
            let recon = ntm::reconstruction_term(bow, &decoded)?;
            (kl, recon)
        };
        let ntm_loss = kl.add(recon)?;

        let u = classifier::embed(&doc.seq, self.l_max, self.cls.embedding)?;
        let (output, p_per_hop) = match self.arch {
            Architecture::TopicMemory => {
                let mask = self.sequence_mask(doc.seq.len().min(self.l_max));
                let readout =
                    memory::run_hops_with(&self.memories, theta, u, self.gamma, mask)?;
                let output = classifier::classify(readout.r_final, readout.u_final, &self.cls)?;
                (output, readout.p_per_hop)
            }
            Architecture::ThetaConcat => {
                (classifier::classify_with_mixture(theta, u, &self.cls)?, Vec::new())
            }
        };
        Ok(ForwardPass { ntm_loss, kl, recon, output, theta, p_per_hop })
    }

    /// Ones over the real-token prefix, zeros over padding; `None` when
    /// nothing is padded.
    fn sequence_mask(&self, real_len: usize) -> Option<Var<'t>> {
        if real_len >= self.l_max {
            return None;
        }
        let mut data = vec![0.0; self.k * self.l_max];
        for row in 0..self.k {
            data[row * self.l_max..row * self.l_max + real_len].fill(1.0);
        }
        Some(self.tape.constant(Tensor::new(vec![self.k, self.l_max], data).expect("mask shape")))
    }
}

/// Expand sparse `(word, count)` pairs into a dense `[1, V]` row.
pub fn dense_bow(bow: &[(usize, u32)], v: usize) -> Tensor {
    let mut data = vec![0.0; v];
    for &(word, count) in bow {
        data[word] = count as f64;
    }
    Tensor::new(vec![1, v], data).expect("bag fits the vocabulary")
}

/// A trained model plus everything needed to classify raw text.
pub struct TrainedModel {
    pub model: Model,
    pub vocab: Vocabulary,
    pub seq_vocab: Vocabulary,
    /// Label names in id order.
    pub labels: Vec<String>,
    /// Most frequent training label (ties broken by name), the fallback
    /// for text that tokenizes to nothing.
    pub majority_label: usize,
    pub lowercase: bool,
    pub binary_bow: bool,
}

/// One classified instance.
pub struct Prediction {
    pub label: usize,
    /// Class distribution; absent when the fallback fired.
    pub probs: Option<Vec<f64>>,
    /// Topic mixture; absent when the fallback fired.
    pub theta: Option<Vec<f64>>,
    /// True when the input tokenized to nothing and the majority label
    /// was returned instead of a model decision.
    pub fallback: bool,
}

impl TrainedModel {
    /// Turn raw text into the same document shape training used.
    pub fn document_from_text(&self, text: &str) -> Document {
        let tokens = crate::corpus::tokenize(text, self.lowercase);
        let mut counts = std::collections::BTreeMap::new();
        for token in &tokens {
            if let Some(id) = self.vocab.id(token) {
                *counts.entry(id).or_insert(0u32) += 1;
            }
        }
        if self.binary_bow {
            for count in counts.values_mut() {
                *count = 1;
            }
        }
        let seq = tokens
            .iter()
            .take(self.model.dims.l_max)
            .map(|t| self.seq_vocab.id(t).unwrap_or(UNK))
            .collect();
        Document { bow: counts.into_iter().collect(), seq, label: 0 }
    }

    /// Deterministic single-instance inference; empty tokenizations fall
    /// back to the majority label, flagged.
    pub fn predict(&self, text: &str) -> Result<Prediction, TensorError> {
        let tokens = crate::corpus::tokenize(text, self.lowercase);
        if tokens.is_empty() {
            return Ok(Prediction {
                label: self.majority_label,
                probs: None,
                theta: None,
                fallback: true,
            });
        }
        let doc = self.document_from_text(text);
        let tape = Tape::new();
        let bound = self.model.bind(&tape)?;
        let pass = bound.forward(&doc, None)?;
        let probs = pass.output.probs.value().data().to_vec();
        let label = argmax(&probs);
        Ok(Prediction {
            label,
            probs: Some(probs),
            theta: Some(pass.theta.value().data().to_vec()),
            fallback: false,
        })
    }

    /// Deterministic inference over an already-prepared document.
    pub fn predict_document(&self, doc: &Document) -> Result<Prediction, TensorError> {
        let tape = Tape::new();
        let bound = self.model.bind(&tape)?;
        let pass = bound.forward(doc, None)?;
        let probs = pass.output.probs.value().data().to_vec();
        let label = argmax(&probs);
        Ok(Prediction {
            label,
            probs: Some(probs),
            theta: Some(pass.theta.value().data().to_vec()),
            fallback: false,
        })
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
