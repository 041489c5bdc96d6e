//! Error type for tensor and graph operations.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape {shape:?} implies {expected} elements, buffer has {len}", expected = shape.iter().product::<usize>())]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },

    #[error("matmul inner dimensions do not match: {a:?} x {b:?}")]
    MatmulShape { a: Vec<usize>, b: Vec<usize> },

    #[error("{op}: expected shape {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("target id {id} at position {position} out of range for vocab size {vocab}")]
    TargetOutOfRange {
        id: usize,
        position: usize,
        vocab: usize,
    },

    #[error("embedding id {id} at position {position} out of range for table with {rows} rows")]
    EmbeddingOutOfRange {
        id: usize,
        position: usize,
        rows: usize,
    },

    #[error("backward requires a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },

    #[error("loss evaluated to a non-finite value")]
    NonFiniteLoss,
}
