//! Model architecture: configuration, parameter layout, weights, and forward pass.
//!
//! A model is a stack of groups. Each group holds `L` transformer blocks that
//! run `M` times; before every block application the block's learned encoding
//! vector for the current iteration is added to the block input. The standard
//! baseline is the degenerate case: every group has one iteration and carries
//! no encoding vectors.

mod forward;
mod weights;

pub use forward::{
    apply_iteration_encoding, block_forward, group_forward, insert_weights, model_forward,
    model_logits, model_loss, BlockCall, ForwardTrace, ModelLoss, WeightVars,
};
pub use weights::{BlockWeights, GroupWeights, IterationEncodingTable, ModelWeights};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::NumericsError;

/// Default cap on `L*M` per group.
pub const DEFAULT_EFFECTIVE_DEPTH_CAP: usize = 64;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("embedding_dim {dim} is not divisible by n_heads {heads}")]
    DimHeadsMismatch { dim: usize, heads: usize },

    #[error("vocab_size must be at least 2, got {0}")]
    VocabTooSmall(usize),

    #[error("context_length must be at least 1")]
    ContextTooSmall,

    #[error("model must have at least one group")]
    NoGroups,

    #[error("group {index} has zero blocks or zero iterations")]
    EmptyGroup { index: usize },

    #[error("group {index}: L*M = {depth} exceeds effective-depth cap {cap}")]
    DepthCapExceeded {
        index: usize,
        depth: usize,
        cap: usize,
    },

    #[error("architecture kind {kind:?} inconsistent with group iterations (standard requires all iterations == 1)")]
    KindMismatch { kind: ArchitectureKind },

    #[error("token id {id} at position {position} out of range for vocab size {vocab}")]
    TokenOutOfRange {
        id: u32,
        position: usize,
        vocab: usize,
    },

    #[error("sequence length {len} exceeds context length {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("input token sequence is empty")]
    EmptyInput,

    #[error("iteration {iteration} out of range, group runs {n_iterations} iterations (1-based)")]
    IterationOutOfRange {
        iteration: usize,
        n_iterations: usize,
    },

    #[error("block index {block} out of range, group has {n_blocks} blocks")]
    BlockOutOfRange { block: usize, n_blocks: usize },

    #[error("model has no iteration encodings (standard architecture)")]
    NoEncodings,

    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Architecture-spec string parse failure, with the byte offset of the problem.
#[derive(Debug, Error)]
#[error("invalid architecture spec at byte {position}: {message}")]
pub struct ArchParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    Standard,
    Frailt,
}

/// One group: `n_blocks` blocks applied over `n_iterations` passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub n_blocks: usize,
    pub n_iterations: usize,
}

impl GroupSpec {
    pub fn new(n_blocks: usize, n_iterations: usize) -> Self {
        Self {
            n_blocks,
            n_iterations,
        }
    }

    pub fn depth(&self) -> usize {
        self.n_blocks * self.n_iterations
    }
}

fn default_depth_cap() -> usize {
    DEFAULT_EFFECTIVE_DEPTH_CAP
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub context_length: usize,
    pub groups: Vec<GroupSpec>,
    pub architecture_kind: ArchitectureKind,
    #[serde(default = "default_depth_cap")]
    pub effective_depth_cap: usize,
}

impl ModelConfig {
    /// Builds a config from an architecture spec string, e.g. `"8"` or `"2x4"`.
    pub fn from_arch_spec(
        spec: &str,
        embedding_dim: usize,
        n_heads: usize,
        vocab_size: usize,
        context_length: usize,
    ) -> Result<Self, ArchParseError> {
        let (groups, architecture_kind) = parse_arch_spec(spec)?;
        Ok(Self {
            embedding_dim,
            n_heads,
            vocab_size,
            context_length,
            groups,
            architecture_kind,
            effective_depth_cap: DEFAULT_EFFECTIVE_DEPTH_CAP,
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embedding_dim == 0 || self.embedding_dim % self.n_heads != 0 {
            return Err(ModelError::DimHeadsMismatch {
                dim: self.embedding_dim,
                heads: self.n_heads,
            });
        }
        if self.vocab_size < 2 {
            return Err(ModelError::VocabTooSmall(self.vocab_size));
        }
        if self.context_length == 0 {
            return Err(ModelError::ContextTooSmall);
        }
        if self.groups.is_empty() {
            return Err(ModelError::NoGroups);
        }
        for (index, group) in self.groups.iter().enumerate() {
            if group.n_blocks == 0 || group.n_iterations == 0 {
                return Err(ModelError::EmptyGroup { index });
            }
            if group.depth() > self.effective_depth_cap {
                return Err(ModelError::DepthCapExceeded {
                    index,
                    depth: group.depth(),
                    cap: self.effective_depth_cap,
                });
            }
        }
        let all_single = self.groups.iter().all(|g| g.n_iterations == 1);
        let is_standard = self.architecture_kind == ArchitectureKind::Standard;
        if is_standard != all_single {
            return Err(ModelError::KindMismatch {
                kind: self.architecture_kind,
            });
        }
        Ok(())
    }

    /// Total block applications per forward pass: sum of `L*M` over groups.
    pub fn effective_depth(&self) -> usize {
        self.groups.iter().map(GroupSpec::depth).sum()
    }

    /// MLP hidden width: `4*d` rounded up to a multiple of `n_heads`.
    pub fn mlp_hidden_dim(&self) -> usize {
        let raw = 4 * self.embedding_dim;
        raw.div_ceil(self.n_heads) * self.n_heads
    }

    pub fn head_dim(&self) -> usize {
        self.embedding_dim / self.n_heads
    }

    /// Display name in the `L^M` notation, e.g. `"8"` or `"2^4"`.
    pub fn arch_label(&self) -> String {
        match self.architecture_kind {
            ArchitectureKind::Standard => format!("{}", self.effective_depth()),
            ArchitectureKind::Frailt => {
                // Collapse runs of identical single-block groups back to L^M.
                let mut parts: Vec<String> = Vec::new();
                let mut i = 0;
                while i < self.groups.len() {
                    let g = self.groups[i];
                    if g.n_blocks == 1 {
                        let mut run = 1;
                        while i + run < self.groups.len() && self.groups[i + run] == g {
                            run += 1;
                        }
                        parts.push(format!("{}^{}", run, g.n_iterations));
                        i += run;
                    } else {
                        parts.push(format!("{}^{}(grouped)", g.n_blocks, g.n_iterations));
                        i += 1;
                    }
                }
                parts.join(",")
            }
        }
    }
}

/// Parses an architecture spec: comma-separated terms, each either a plain
/// block count `N` (N stacked once-through blocks) or `LxM`, which expands to
/// `L` single-block groups iterated `M` times each. The kind is standard
/// exactly when every resulting group runs a single iteration.
pub fn parse_arch_spec(text: &str) -> Result<(Vec<GroupSpec>, ArchitectureKind), ArchParseError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ArchParseError {
            position: 0,
            message: "empty spec".into(),
        });
    }
    let mut groups = Vec::new();
    let mut offset = 0usize;
    for term in trimmed.split(',') {
        let term_start = offset;
        offset += term.len() + 1;
        let term = term.trim();
        if term.is_empty() {
            return Err(ArchParseError {
                position: term_start,
                message: "empty term".into(),
            });
        }
        let parse_int = |s: &str, at: usize| -> Result<usize, ArchParseError> {
            let n: usize = s.parse().map_err(|_| ArchParseError {
                position: at,
                message: format!("expected a positive integer, found {s:?}"),
            })?;
            if n == 0 {
                return Err(ArchParseError {
                    position: at,
                    message: "zero is not a valid count".into(),
                });
            }
            Ok(n)
        };
        match term.split_once('x') {
            Some((blocks, iterations)) => {
                let l = parse_int(blocks, term_start)?;
                let m = parse_int(iterations, term_start + blocks.len() + 1)?;
                for _ in 0..l {
                    groups.push(GroupSpec::new(1, m));
                }
            }
            None => {
                let n = parse_int(term, term_start)?;
                for _ in 0..n {
                    groups.push(GroupSpec::new(1, 1));
                }
            }
        }
    }
    let kind = if groups.iter().all(|g| g.n_iterations == 1) {
        ArchitectureKind::Standard
    } else {
        ArchitectureKind::Frailt
    };
    Ok((groups, kind))
}

/// Parameter tensor layout for a config: `(name, shape)` in canonical order.
/// This is the single source of truth shared by initialization, counting,
/// checkpoints, and the optimizer.
pub fn tensor_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.embedding_dim;
    let h = config.mlp_hidden_dim();
    let v = config.vocab_size;
    let mut layout = vec![("token_embedding".to_string(), vec![v, d])];
    for (g, group) in config.groups.iter().enumerate() {
        for l in 0..group.n_blocks {
            let p = format!("g{g}.b{l}");
            layout.push((format!("{p}.attn_norm"), vec![d]));
            layout.push((format!("{p}.wq"), vec![d, d]));
            layout.push((format!("{p}.wk"), vec![d, d]));
            layout.push((format!("{p}.wv"), vec![d, d]));
            layout.push((format!("{p}.wo"), vec![d, d]));
            layout.push((format!("{p}.mlp_norm"), vec![d]));
            layout.push((format!("{p}.w_gate"), vec![d, h]));
            layout.push((format!("{p}.w_up"), vec![d, h]));
            layout.push((format!("{p}.w_down"), vec![h, d]));
            if config.architecture_kind == ArchitectureKind::Frailt {
                for m in 0..group.n_iterations {
                    layout.push((format!("{p}.iter_enc.{m}"), vec![d]));
                }
            }
        }
    }
    layout.push(("final_norm".to_string(), vec![d]));
    layout.push(("output_projection".to_string(), vec![d, v]));
    layout
}

/// Per-tensor and total parameter counts.
#[derive(Debug, Clone)]
pub struct ParamCounts {
    pub tensors: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCounts {
    pub fn count_of(&self, name: &str) -> Option<usize> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, c)| c)
    }

    /// Total size of the iteration-encoding tensors.
    pub fn encoding_total(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| n.contains(".iter_enc."))
            .map(|&(_, c)| c)
            .sum()
    }
}

pub fn param_count(config: &ModelConfig) -> ParamCounts {
    let tensors: Vec<(String, usize)> = tensor_layout(config)
        .into_iter()
        .map(|(name, shape)| (name, shape.iter().product()))
        .collect();
    let total = tensors.iter().map(|&(_, c)| c).sum();
    ParamCounts { tensors, total }
}
