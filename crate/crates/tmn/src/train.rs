//! The training loop: adaptive-moment optimization over shuffled
//! mini-batches, per-epoch dev evaluation, early stopping with
//! best-checkpoint restore, and the two-phase variant that learns topics
//! first and the classifier second.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::classifier;
use crate::config::{Architecture, TrainConfig, TrainMode};
use crate::corpus::PreparedCorpus;
use crate::model::{Model, ModelDims, TrainedModel};
use crate::rng::named_stream;
use crate::tensor::{Binding, GradientMap, ParamStore, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    /// The loss left the finite range; training cannot continue.
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean topic-model loss over the epoch's training instances.
    pub ntm_loss: f64,
    /// Mean classification loss over the epoch's training instances.
    pub cls_loss: f64,
    /// Deterministic dev-split accuracy after the epoch.
    pub dev_acc: f64,
}

/// Write the log in its stable CSV shape.
pub fn write_log_csv<W: Write>(log: &[EpochLog], out: &mut W) -> io::Result<()> {
    writeln!(out, "epoch,ntm_loss,cls_loss,dev_acc")?;
    for row in log {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6}",
            row.epoch, row.ntm_loss, row.cls_loss, row.dev_acc
        )?;
    }
    Ok(())
}

/// Everything a finished run produces.
pub struct TrainOutcome {
    pub trained: TrainedModel,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_dev_acc: f64,
    pub stopped_early: bool,
}

/// Adaptive moment estimation with the usual decay constants.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    state: BTreeMap<crate::tensor::ParamId, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, state: BTreeMap::new() }
    }

    /// Apply one update from the gradients of a finished backward pass.
    /// Parameters without a gradient (frozen or unreached) are untouched.
    pub fn step(&mut self, store: &mut ParamStore, binding: &Binding, grads: &GradientMap) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in store.ids().collect::<Vec<_>>() {
            if !store.trainable(id) {
                continue;
            }
            let Some(grad) = grads.get(binding.var(id)) else { continue };
            let grad = grad.clone();
            let (m, v) = self.state.entry(id).or_insert_with(|| {
                let shape = grad.shape().to_vec();
                (Tensor::zeros(shape.clone()), Tensor::zeros(shape))
            });
            let mut value = store.value(id).clone();
            let out = value.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            let gd = grad.data();
            for i in 0..out.len() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gd[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                out[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            store.set_value(id, value);
        }
    }
}

/// What a phase optimizes.
#[derive(Clone, Copy)]
enum Objective {
    /// Topic loss plus `lambda` times the classification loss.
    Joint(f64),
    /// Topic loss alone, with dev topic loss as the stopping metric.
    TopicOnly,
    /// `lambda` times the classification loss alone, no sampling noise.
    ClassifierOnly(f64),
}

impl Objective {
    fn uses_noise(self) -> bool {
        !matches!(self, Objective::ClassifierOnly(_))
    }
}

struct PhaseResult {
    last_epoch: usize,
    best_epoch: usize,
    best_dev_acc: f64,
    stopped_early: bool,
}

/// Train a model on a prepared corpus.
///
/// Joint mode minimizes the combined objective over every parameter.
/// Separate mode first fits the topic model alone (stopping on dev topic
/// loss), then freezes every topic-model parameter and fits the
/// classifier (stopping on dev accuracy); epoch numbering runs straight
/// through both phases.
pub fn train(
    corpus: &PreparedCorpus,
    config: &TrainConfig,
    mode: TrainMode,
    arch: Architecture,
) -> Result<TrainOutcome, TrainError> {
    train_with_embeddings(corpus, config, mode, arch, None::<std::io::Empty>)
}

/// [`train`], optionally seeding the word-embedding table from a text
/// file of `word v1 v2 ... vE` lines before the first step. Words absent
/// from the sequence vocabulary are skipped; every embedding stays
/// trainable afterwards.
pub fn train_with_embeddings<R: BufRead>(
    corpus: &PreparedCorpus,
    config: &TrainConfig,
    mode: TrainMode,
    arch: Architecture,
    embeddings: Option<R>,
) -> Result<TrainOutcome, TrainError> {
    config.validate().map_err(TrainError::Config)?;
    if corpus.split.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if corpus.split.dev.is_empty() {
        return Err(TrainError::EmptySplit("dev"));
    }

    let dims = ModelDims {
        v: corpus.meta.v,
        v_seq: corpus.meta.v_seq,
        c: corpus.meta.c,
        l_max: corpus.meta.l_max,
    };
    let mut model = Model::new(config.clone(), dims, arch);
    if let Some(reader) = embeddings {
        let id = model.embedding_param();
        let mut table = model.store.value(id).clone();
        classifier::apply_pretrained(reader, &corpus.seq_vocab, &mut table)
            .map_err(|e| TrainError::Config(format!("embedding file: {e}")))?;
        model.store.set_value(id, table);
    }
    let mut shuffle_rng = named_stream(config.seed, "shuffle");
    let mut sampling_rng = named_stream(config.seed, "sampling");
    let mut log = Vec::new();

    let (best_epoch, best_dev_acc, stopped_early) = match mode {
        TrainMode::Joint => {
            let phase = run_phase(
                &mut model,
                corpus,
                config,
                Objective::Joint(config.lambda),
                0,
                &mut log,
                &mut shuffle_rng,
                &mut sampling_rng,
            )?;
            (phase.best_epoch, phase.best_dev_acc, phase.stopped_early)
        }
        TrainMode::Separate => {
            let first = run_phase(
                &mut model,
                corpus,
                config,
                Objective::TopicOnly,
                0,
                &mut log,
                &mut shuffle_rng,
                &mut sampling_rng,
            )?;
            for id in model.ntm_param_ids() {
                model.store.set_trainable(id, false);
            }
            let second = run_phase(
                &mut model,
                corpus,
                config,
                Objective::ClassifierOnly(config.lambda),
                first.last_epoch,
                &mut log,
                &mut shuffle_rng,
                &mut sampling_rng,
            );
            for id in model.ntm_param_ids() {
                model.store.set_trainable(id, true);
            }
            let second = second?;
            (second.best_epoch, second.best_dev_acc, second.stopped_early)
        }
    };

    let majority_label = majority_train_label(corpus);
    Ok(TrainOutcome {
        trained: TrainedModel {
            model,
            vocab: corpus.vocab.clone(),
            seq_vocab: corpus.seq_vocab.clone(),
            labels: corpus.labels.clone(),
            majority_label,
            lowercase: corpus.meta.lowercase,
            binary_bow: corpus.meta.binary_bow,
        },
        log,
        best_epoch,
        best_dev_acc,
        stopped_early,
    })
}

/// The most frequent training label, ties broken by label name.
pub fn majority_train_label(corpus: &PreparedCorpus) -> usize {
    let mut counts = vec![0usize; corpus.labels.len()];
    for &i in &corpus.split.train {
        counts[corpus.docs[i].label] += 1;
    }
    (0..counts.len())
        .max_by(|&a, &b| {
            counts[a]
                .cmp(&counts[b])
                .then_with(|| corpus.labels[b].cmp(&corpus.labels[a]))
        })
        .unwrap_or(0)
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    model: &mut Model,
    corpus: &PreparedCorpus,
    config: &TrainConfig,
    objective: Objective,
    epoch_offset: usize,
    log: &mut Vec<EpochLog>,
    shuffle_rng: &mut ChaCha20Rng,
    sampling_rng: &mut ChaCha20Rng,
) -> Result<PhaseResult, TrainError> {
    let k = config.k;
    let mut adam = Adam::new(config.learning_rate);
    let mut best_metric: Option<f64> = None;
    let mut best_snapshot: Vec<Tensor> = Vec::new();
    let mut best_epoch = epoch_offset;
    let mut best_dev_acc = 0.0;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut last_epoch = epoch_offset;

    for local in 1..=config.epochs {
        let epoch = epoch_offset + local;
        last_epoch = epoch;

        let mut order = corpus.split.train.clone();
        order.shuffle(shuffle_rng);

        let kl_weight = kl_ramp(config.kl_warmup_epochs, local);
        let mut ntm_sum = 0.0;
        let mut cls_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (batch_ntm, batch_cls) =
                run_batch(model, &mut adam, corpus, batch, objective, kl_weight, k, sampling_rng)
                    .map_err(|e| diverged(e, epoch))?;
            ntm_sum += batch_ntm;
            cls_sum += batch_cls;
        }

        let (dev_acc, dev_ntm) =
            evaluate_dev(model, corpus).map_err(|e| diverged(e.into(), epoch))?;
        let n_train = order.len() as f64;
        log.push(EpochLog {
            epoch,
            ntm_loss: ntm_sum / n_train,
            cls_loss: cls_sum / n_train,
            dev_acc,
        });
        if !(ntm_sum.is_finite() && cls_sum.is_finite()) {
            return Err(TrainError::Diverged { epoch });
        }

        // Higher is better for accuracy, so the topic-only phase tracks
        // the negated dev topic loss.
        let metric = match objective {
            Objective::TopicOnly => -dev_ntm,
            _ => dev_acc,
        };
        let improved = best_metric.map_or(true, |b| metric > b);
        if improved {
            best_metric = Some(metric);
            best_snapshot = snapshot(&model.store);
            best_epoch = epoch;
            best_dev_acc = dev_acc;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    if !best_snapshot.is_empty() {
        restore(&mut model.store, &best_snapshot);
    }
    Ok(PhaseResult { last_epoch, best_epoch, best_dev_acc, stopped_early })
}

fn diverged(e: TrainError, epoch: usize) -> TrainError {
    match e {
        TrainError::Tensor(TensorError::NumericalError { .. }) => TrainError::Diverged { epoch },
        other => other,
    }
}

/// Divergence-term weight for a phase-local epoch (1-based): a linear
/// ramp over the warm-up span, one afterwards, one when disabled.
fn kl_ramp(warmup: usize, epoch_in_phase: usize) -> f64 {
    if warmup == 0 {
        1.0
    } else {
        (epoch_in_phase as f64 / warmup as f64).min(1.0)
    }
}

/// One optimizer step over one mini-batch; returns the batch's summed
/// (unweighted) topic and classification losses.
fn run_batch(
    model: &mut Model,
    adam: &mut Adam,
    corpus: &PreparedCorpus,
    batch: &[usize],
    objective: Objective,
    kl_weight: f64,
    k: usize,
    sampling_rng: &mut ChaCha20Rng,
) -> Result<(f64, f64), TrainError> {
    let tape = Tape::new();
    let bound = model.bind(&tape)?;
    let mut ntm_sum = 0.0;
    let mut cls_sum = 0.0;
    let mut losses = Vec::with_capacity(batch.len());
    for &i in batch {
        let doc = &corpus.docs[i];
        let eps = objective.uses_noise().then(|| draw_noise(sampling_rng, k));
        let pass = bound.forward(doc, eps.as_ref())?;
        let cls = classifier::cls_loss(&pass.output, doc.label)?;
        ntm_sum += pass.ntm_loss.value().item();
        cls_sum += cls.value().item();
        let ntm_part = if kl_weight == 1.0 {
            pass.ntm_loss
        } else {
            pass.kl.scale(kl_weight)?.add(pass.recon)?
        };
        let loss = match objective {
            Objective::Joint(lambda) => classifier::joint_loss(ntm_part, cls, lambda)?,
            Objective::TopicOnly => ntm_part,
            Objective::ClassifierOnly(lambda) => cls.scale(lambda)?,
        };
        losses.push(loss);
    }
    let mut total = losses[0];
    for loss in &losses[1..] {
        total = total.add(*loss)?;
    }
    let mean = total.scale(1.0 / batch.len() as f64)?;
    let grads = tape.backward(mean)?;
    adam.step(&mut model.store, &bound.binding, &grads);
    Ok((ntm_sum, cls_sum))
}

fn draw_noise(rng: &mut ChaCha20Rng, k: usize) -> Tensor {
    let data = (0..k).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(vec![1, k], data).expect("noise shape")
}

/// Deterministic dev-split pass: accuracy and mean topic loss.
fn evaluate_dev(model: &Model, corpus: &PreparedCorpus) -> Result<(f64, f64), TensorError> {
    let tape = Tape::new();
    let bound = model.bind(&tape)?;
    let mut correct = 0usize;
    let mut ntm_sum = 0.0;
    for &i in &corpus.split.dev {
        let doc = &corpus.docs[i];
        let pass = bound.forward(doc, None)?;
        let probs = pass.output.probs.value();
        if crate::model::argmax(probs.data()) == doc.label {
            correct += 1;
        }
        ntm_sum += pass.ntm_loss.value().item();
    }
    let n = corpus.split.dev.len() as f64;
    Ok((correct as f64 / n, ntm_sum / n))
}

fn snapshot(store: &ParamStore) -> Vec<Tensor> {
    store.ids().map(|id| store.value(id).clone()).collect()
}

fn restore(store: &mut ParamStore, snap: &[Tensor]) {
    let ids: Vec<_> = store.ids().collect();
    for (id, tensor) in ids.into_iter().zip(snap) {
        store.set_value(id, tensor.clone());
    }
}
