//! Co-attentional multimodal video transformer for future-utterance
//! prediction: text and visual encoders, two-stream co-attentional fusion,
//! ranking and classification heads, dataset construction, and a
//! training/evaluation harness.

pub mod data;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod heads;
pub mod numerics;
pub mod text;
pub mod visual;

#[cfg(test)]
mod testutil;

pub use error::{Error, ErrorKind, Result};
pub use numerics::{ParamStore, SeededRng, Tape, Tensor, Var};
