//! Runs every code block in the guide as a doc-test.
//!
//! mdbook renders `book/` but cannot compile its snippets against the
//! real crate, so this shim includes each chapter as a module doc
//! comment and lets `cargo test --doc` do the checking. One module per
//! chapter keeps test failures traceable to their source file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}

#[doc = include_str!("../../../book/src/tensors.md")]
pub mod tensors {}

#[doc = include_str!("../../../book/src/topic-model.md")]
pub mod topic_model {}

#[doc = include_str!("../../../book/src/topic-memory.md")]
pub mod topic_memory {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
