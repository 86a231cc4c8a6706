//! Hierarchical character-level language models.
//!
//! Character-level LSTM language models whose word-level module runs on a
//! slower clock driven by word-boundary tokens, together with the training,
//! evaluation, sampling and beam-search decoding tools around them.

pub mod cells;
pub mod cli;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod training;

pub use error::{Error, Result};
