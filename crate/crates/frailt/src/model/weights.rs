//! Parameter containers and deterministic initialization.

use crate::model::{ArchitectureKind, GroupSpec, ModelConfig, ModelError};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Gaussian init scale for projection and embedding matrices.
const INIT_STD: f64 = 0.02;

/// Weights of one transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub attn_norm: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub mlp_norm: Tensor,
    pub w_gate: Tensor,
    pub w_up: Tensor,
    pub w_down: Tensor,
}

/// Learned iteration encodings for one group: `L*M` vectors of length `d`,
/// one per (block, iteration) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationEncodingTable {
    n_blocks: usize,
    n_iterations: usize,
    vectors: Vec<Tensor>,
}

impl IterationEncodingTable {
    pub fn zeros(spec: GroupSpec, embedding_dim: usize) -> Self {
        let vectors = (0..spec.n_blocks * spec.n_iterations)
            .map(|_| Tensor::zeros(vec![embedding_dim]))
            .collect();
        Self {
            n_blocks: spec.n_blocks,
            n_iterations: spec.n_iterations,
            vectors,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn n_iterations(&self) -> usize {
        self.n_iterations
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Encoding vector for `block` (0-based) at `iteration` (1-based, matching
    /// the equation's `m`; stored 0-based internally).
    pub fn vector(&self, block: usize, iteration: usize) -> Result<&Tensor, ModelError> {
        self.index_of(block, iteration)
            .map(|i| &self.vectors[i])
    }

    pub fn vector_mut(&mut self, block: usize, iteration: usize) -> Result<&mut Tensor, ModelError> {
        self.index_of(block, iteration)
            .map(move |i| &mut self.vectors[i])
    }

    fn index_of(&self, block: usize, iteration: usize) -> Result<usize, ModelError> {
        if block >= self.n_blocks {
            return Err(ModelError::BlockOutOfRange {
                block,
                n_blocks: self.n_blocks,
            });
        }
        if iteration == 0 || iteration > self.n_iterations {
            return Err(ModelError::IterationOutOfRange {
                iteration,
                n_iterations: self.n_iterations,
            });
        }
        Ok(block * self.n_iterations + (iteration - 1))
    }
}

/// One group: block weights plus, for the recursive architecture, the
/// iteration-encoding table.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeights {
    pub blocks: Vec<BlockWeights>,
    pub encodings: Option<IterationEncodingTable>,
}

/// Full parameter set, structured to mirror [`crate::model::tensor_layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub token_embedding: Tensor,
    pub groups: Vec<GroupWeights>,
    pub final_norm: Tensor,
    pub output_projection: Tensor,
}

impl ModelWeights {
    /// Deterministic initialization from a seed: Gaussian(0, 0.02) projections
    /// and embeddings, unit norm weights, zero iteration encodings (so a fresh
    /// recursive model starts as an exactly weight-shared recursion). The two
    /// residual-output projections (`wo`, `w_down`) are scaled down by
    /// `1/sqrt(2 * effective_depth)` so the residual stream keeps unit-order
    /// variance however many block applications run.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut weights = Self::zeros(config);
        let residual_scale = 1.0 / (2.0 * config.effective_depth() as f64).sqrt();
        for (name, tensor) in weights.named_tensors_mut() {
            if name.ends_with("norm") {
                tensor.data_mut().fill(1.0);
            } else if name.contains(".iter_enc.") {
                // already zero
            } else {
                let std = if name.ends_with(".wo") || name.ends_with(".w_down") {
                    INIT_STD * residual_scale
                } else {
                    INIT_STD
                };
                for v in tensor.data_mut() {
                    *v = (rng.next_gaussian() * std) as f32;
                }
            }
        }
        weights
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.embedding_dim;
        let h = config.mlp_hidden_dim();
        let v = config.vocab_size;
        let groups = config
            .groups
            .iter()
            .map(|spec| GroupWeights {
                blocks: (0..spec.n_blocks)
                    .map(|_| BlockWeights {
                        attn_norm: Tensor::zeros(vec![d]),
                        wq: Tensor::zeros(vec![d, d]),
                        wk: Tensor::zeros(vec![d, d]),
                        wv: Tensor::zeros(vec![d, d]),
                        wo: Tensor::zeros(vec![d, d]),
                        mlp_norm: Tensor::zeros(vec![d]),
                        w_gate: Tensor::zeros(vec![d, h]),
                        w_up: Tensor::zeros(vec![d, h]),
                        w_down: Tensor::zeros(vec![h, d]),
                    })
                    .collect(),
                encodings: match config.architecture_kind {
                    ArchitectureKind::Frailt => Some(IterationEncodingTable::zeros(*spec, d)),
                    ArchitectureKind::Standard => None,
                },
            })
            .collect();
        Self {
            token_embedding: Tensor::zeros(vec![v, d]),
            groups,
            final_norm: Tensor::zeros(vec![d]),
            output_projection: Tensor::zeros(vec![d, v]),
        }
    }

    /// All parameter tensors with their canonical names, in layout order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> =
            vec![("token_embedding".to_string(), &self.token_embedding)];
        for (g, group) in self.groups.iter().enumerate() {
            let m = group
                .encodings
                .as_ref()
                .map(|e| e.n_iterations())
                .unwrap_or(0);
            for (l, block) in group.blocks.iter().enumerate() {
                let p = format!("g{g}.b{l}");
                out.push((format!("{p}.attn_norm"), &block.attn_norm));
                out.push((format!("{p}.wq"), &block.wq));
                out.push((format!("{p}.wk"), &block.wk));
                out.push((format!("{p}.wv"), &block.wv));
                out.push((format!("{p}.wo"), &block.wo));
                out.push((format!("{p}.mlp_norm"), &block.mlp_norm));
                out.push((format!("{p}.w_gate"), &block.w_gate));
                out.push((format!("{p}.w_up"), &block.w_up));
                out.push((format!("{p}.w_down"), &block.w_down));
                if let Some(table) = &group.encodings {
                    for it in 0..m {
                        out.push((
                            format!("{p}.iter_enc.{it}"),
                            table.vector(l, it + 1).expect("table sized by spec"),
                        ));
                    }
                }
            }
        }
        out.push(("final_norm".to_string(), &self.final_norm));
        out.push(("output_projection".to_string(), &self.output_projection));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> =
            vec![("token_embedding".to_string(), &mut self.token_embedding)];
        for (g, group) in self.groups.iter_mut().enumerate() {
            let m = group
                .encodings
                .as_ref()
                .map(|e| e.n_iterations())
                .unwrap_or(0);
            let n_blocks = group.blocks.len();
            for (l, block) in group.blocks.iter_mut().enumerate() {
                let p = format!("g{g}.b{l}");
                out.push((format!("{p}.attn_norm"), &mut block.attn_norm));
                out.push((format!("{p}.wq"), &mut block.wq));
                out.push((format!("{p}.wk"), &mut block.wk));
                out.push((format!("{p}.wv"), &mut block.wv));
                out.push((format!("{p}.wo"), &mut block.wo));
                out.push((format!("{p}.mlp_norm"), &mut block.mlp_norm));
                out.push((format!("{p}.w_gate"), &mut block.w_gate));
                out.push((format!("{p}.w_up"), &mut block.w_up));
                out.push((format!("{p}.w_down"), &mut block.w_down));
            }
            if let Some(table) = &mut group.encodings {
                debug_assert_eq!(table.vectors.len(), n_blocks * m);
                for (i, t) in table.vectors.iter_mut().enumerate() {
                    // vectors are stored block-major: index = block * M + (iter - 1)
                    out.push((format!("g{g}.b{}.iter_enc.{}", i / m, i % m), t));
                }
            }
        }
        out.push(("final_norm".to_string(), &mut self.final_norm));
        out.push(("output_projection".to_string(), &mut self.output_projection));
        out.sort_by_cached_key(|(name, _)| layout_rank(name));
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.named_tensors()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<(), ModelError> {
        for (n, t) in self.named_tensors_mut() {
            if n == name {
                if t.shape() != value.shape() {
                    return Err(ModelError::Numerics(
                        crate::error::NumericsError::ShapeMismatch {
                            op: "set_tensor",
                            expected: t.shape().to_vec(),
                            got: value.shape().to_vec(),
                        },
                    ));
                }
                *t = value;
                return Ok(());
            }
        }
        Err(ModelError::BlockOutOfRange {
            block: 0,
            n_blocks: 0,
        })
    }

    pub fn param_total(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Stable digest over every tensor's name, shape, and bits.
    pub fn digest(&self) -> u64 {
        let mut acc: u64 = 0xcbf29ce484222325;
        for (name, tensor) in self.named_tensors() {
            acc ^= crate::rng::fnv1a64(name.as_bytes());
            acc = acc.wrapping_mul(0x100000001B3);
            acc ^= tensor.digest();
            acc = acc.wrapping_mul(0x100000001B3);
        }
        acc
    }
}

/// Sort key reproducing layout order from a tensor name alone.
fn layout_rank(name: &str) -> (usize, usize, usize, usize) {
    // (section, group, block, slot)
    match name {
        "token_embedding" => (0, 0, 0, 0),
        "final_norm" => (2, 0, 0, 0),
        "output_projection" => (2, 0, 0, 1),
        _ => {
            let rest = name.strip_prefix('g').unwrap_or(name);
            let (g, rest) = rest.split_once(".b").unwrap_or(("0", rest));
            let (l, field) = rest.split_once('.').unwrap_or((rest, ""));
            let slot = match field {
                "attn_norm" => 0,
                "wq" => 1,
                "wk" => 2,
                "wv" => 3,
                "wo" => 4,
                "mlp_norm" => 5,
                "w_gate" => 6,
                "w_up" => 7,
                "w_down" => 8,
                other => {
                    let it: usize = other
                        .strip_prefix("iter_enc.")
                        .and_then(|s| s.parse().ok())
                        .unwrap_or(0);
                    9 + it
                }
            };
            (
                1,
                g.parse().unwrap_or(0),
                l.parse().unwrap_or(0),
                slot,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{param_count, tensor_layout};

    fn config(arch: &str) -> ModelConfig {
        ModelConfig::from_arch_spec(arch, 32, 4, 64, 16).unwrap()
    }

    #[test]
    fn named_tensors_match_layout_exactly() {
        for arch in ["1", "4", "1x2", "2x4", "1x2,1x3"] {
            let cfg = config(arch);
            let weights = ModelWeights::init(&cfg, 1);
            let layout = tensor_layout(&cfg);
            let named = weights.named_tensors();
            assert_eq!(layout.len(), named.len(), "arch {arch}");
            for ((ln, ls), (nn, nt)) in layout.iter().zip(&named) {
                assert_eq!(ln, nn, "arch {arch}");
                assert_eq!(ls.as_slice(), nt.shape(), "arch {arch} tensor {ln}");
            }
        }
    }

    #[test]
    fn named_tensors_mut_matches_immutable_order() {
        let cfg = config("1x2,1x3");
        let mut weights = ModelWeights::init(&cfg, 1);
        let immutable: Vec<String> = weights
            .named_tensors()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        let mutable: Vec<String> = weights
            .named_tensors_mut()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(immutable, mutable);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let cfg = config("1x2");
        let a = ModelWeights::init(&cfg, 7);
        let b = ModelWeights::init(&cfg, 7);
        let c = ModelWeights::init(&cfg, 8);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn encodings_start_at_zero_and_norms_at_one() {
        let cfg = config("1x2");
        let weights = ModelWeights::init(&cfg, 7);
        let table = weights.groups[0].encodings.as_ref().unwrap();
        for m in 1..=2 {
            assert!(table.vector(0, m).unwrap().data().iter().all(|&v| v == 0.0));
        }
        assert!(weights.final_norm.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn standard_has_no_encoding_tensors() {
        let cfg = config("2");
        let weights = ModelWeights::init(&cfg, 7);
        assert!(weights.groups.iter().all(|g| g.encodings.is_none()));
        assert!(weights
            .named_tensors()
            .iter()
            .all(|(n, _)| !n.contains("iter_enc")));
    }

    #[test]
    fn param_total_matches_param_count() {
        for arch in ["1", "2x4", "1x8"] {
            let cfg = config(arch);
            let weights = ModelWeights::init(&cfg, 3);
            assert_eq!(weights.param_total(), param_count(&cfg).total);
        }
    }

    #[test]
    fn encoding_table_rejects_out_of_range() {
        let table = IterationEncodingTable::zeros(GroupSpec::new(2, 3), 8);
        assert!(table.vector(0, 1).is_ok());
        assert!(table.vector(0, 3).is_ok());
        assert!(matches!(
            table.vector(0, 0),
            Err(ModelError::IterationOutOfRange { .. })
        ));
        assert!(matches!(
            table.vector(0, 4),
            Err(ModelError::IterationOutOfRange { .. })
        ));
        assert!(matches!(
            table.vector(2, 1),
            Err(ModelError::BlockOutOfRange { .. })
        ));
    }

    #[test]
    fn set_tensor_replaces_by_name() {
        let cfg = config("1");
        let mut weights = ModelWeights::init(&cfg, 7);
        let replacement = Tensor::filled(vec![32], 0.5);
        weights.set_tensor("final_norm", replacement.clone()).unwrap();
        assert_eq!(weights.final_norm, replacement);
        assert!(weights
            .set_tensor("final_norm", Tensor::zeros(vec![3]))
            .is_err());
    }
}
