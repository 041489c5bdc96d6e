//! Recursive decoder-only transformer with iteration encodings, plus the
//! matched standard baseline and everything needed to train, sample, and
//! compare them: a minimal autodiff tensor core, a byte-level BPE tokenizer,
//! a deterministic trainer with binary checkpoints, an autoregressive
//! generator, and embedded reference tables.

pub mod data;
pub mod error;
pub mod generator;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod reference;
pub mod rng;
pub mod tensor;
pub mod tokenizer;
pub mod trainer;

pub use error::NumericsError;
pub use graph::{ComputationRecord, Graph, Var};
pub use tensor::{Real, Tensor};
