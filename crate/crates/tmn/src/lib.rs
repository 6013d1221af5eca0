//! Joint topic modeling and short-text classification.
//!
//! This crate trains a variational neural topic model and a convolutional
//! text classifier together. The topic model reads a document's
//! bag-of-words vector and infers a mixture over latent topics; a topic
//! memory layer matches those topics against the document's word
//! embeddings and hands the classifier a topic-aware representation. Both
//! objectives share one loss, so topics and class decisions shape each
//! other during training.
//!
//! The pieces, bottom up:
//!
//! - [`tensor`]: dense `f64` tensors with a reverse-mode differentiation
//!   tape and finite-difference checking.
//! - [`corpus`]: tokenization, vocabularies, document views, splits.
//! - [`ntm`]: the neural topic model (encoder, reparameterized sampling,
//!   topic mixture, decoder, loss).
//! - [`memory`]: source/target topic memories, matching, hop stacking.
//! - [`classifier`]: embeddings and the convolutional classifier.
//! - [`model`]: the assembled network and its parameter registry.
//! - [`train`]: the optimizer and the joint/separate training loops.
//! - [`eval`]: classification metrics and topic coherence.
//! - [`checkpoint`]: model serialization.
//! - [`synth`]: a planted-topic corpus generator for experiments.

pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod memory;
pub mod model;
pub mod ntm;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;
