//! Forward pass over the autodiff graph.
//!
//! `group_forward` implements the double loop: for each iteration `m`, each
//! block `l` receives the running activation plus that block's encoding vector
//! for `m`, so one group of `L` blocks simulates `L*M` layers of depth.

use crate::error::NumericsError;
use crate::gradcheck::ScalarLoss;
use crate::graph::{Graph, Var};
use crate::model::{ArchitectureKind, GroupSpec, ModelConfig, ModelError, ModelWeights};
use crate::tensor::{Real, Tensor};

/// Graph handles for one block's parameters.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub attn_norm: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub mlp_norm: Var,
    pub w_gate: Var,
    pub w_up: Var,
    pub w_down: Var,
}

#[derive(Debug, Clone)]
pub struct GroupVars {
    pub blocks: Vec<BlockVars>,
    /// `encodings[block][iteration - 1]`, absent for the standard architecture.
    pub encodings: Option<Vec<Vec<Var>>>,
}

/// Graph handles for the whole parameter set, in the same structure as
/// [`ModelWeights`].
#[derive(Debug, Clone)]
pub struct WeightVars {
    pub token_embedding: Var,
    pub groups: Vec<GroupVars>,
    pub final_norm: Var,
    pub output_projection: Var,
}

impl WeightVars {
    /// Reassembles the structure from leaves inserted in layout order
    /// (the order of [`crate::model::tensor_layout`]).
    pub fn from_ordered_vars(config: &ModelConfig, vars: &[Var]) -> Self {
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("var list matches tensor layout");
        let token_embedding = next();
        let mut groups = Vec::with_capacity(config.groups.len());
        for spec in &config.groups {
            let mut blocks = Vec::with_capacity(spec.n_blocks);
            let mut encodings: Vec<Vec<Var>> = Vec::with_capacity(spec.n_blocks);
            for _ in 0..spec.n_blocks {
                blocks.push(BlockVars {
                    attn_norm: next(),
                    wq: next(),
                    wk: next(),
                    wv: next(),
                    wo: next(),
                    mlp_norm: next(),
                    w_gate: next(),
                    w_up: next(),
                    w_down: next(),
                });
                if config.architecture_kind == ArchitectureKind::Frailt {
                    encodings.push((0..spec.n_iterations).map(|_| next()).collect());
                }
            }
            groups.push(GroupVars {
                blocks,
                encodings: match config.architecture_kind {
                    ArchitectureKind::Frailt => Some(encodings),
                    ArchitectureKind::Standard => None,
                },
            });
        }
        let final_norm = next();
        let output_projection = next();
        assert!(it.next().is_none(), "var list matches tensor layout");
        WeightVars {
            token_embedding,
            groups,
            final_norm,
            output_projection,
        }
    }
}

/// Inserts every parameter tensor as a graph leaf and returns the handles.
pub fn insert_weights<F: Real>(
    graph: &mut Graph<F>,
    weights: &ModelWeights,
    config: &ModelConfig,
) -> WeightVars {
    let vars: Vec<Var> = weights
        .named_tensors()
        .into_iter()
        .map(|(_, t)| graph.leaf_tensor(t))
        .collect();
    WeightVars::from_ordered_vars(config, &vars)
}

/// Per-block-application record: which block ran, at which iteration (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockCall {
    pub group: usize,
    pub block: usize,
    pub iteration: usize,
}

/// Execution trace of block applications, for order verification.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    pub calls: Vec<BlockCall>,
}

/// Adds the encoding vector for (`block_index`, `iteration`) to every row of `x`.
/// `iteration` is 1-based, matching the group equation's `m`.
pub fn apply_iteration_encoding<F: Real>(
    graph: &mut Graph<F>,
    x: Var,
    encodings: &[Vec<Var>],
    block_index: usize,
    iteration: usize,
) -> Result<Var, ModelError> {
    let block = encodings
        .get(block_index)
        .ok_or(ModelError::BlockOutOfRange {
            block: block_index,
            n_blocks: encodings.len(),
        })?;
    if iteration == 0 || iteration > block.len() {
        return Err(ModelError::IterationOutOfRange {
            iteration,
            n_iterations: block.len(),
        });
    }
    Ok(graph.add_row_broadcast(x, block[iteration - 1])?)
}

/// Pre-norm causal self-attention and pre-norm SwiGLU MLP, each with a
/// residual connection. Rotary position embeddings are applied to queries and
/// keys inside attention.
pub fn block_forward<F: Real>(
    graph: &mut Graph<F>,
    x: Var,
    block: &BlockVars,
    n_heads: usize,
    context_length: usize,
) -> Result<Var, ModelError> {
    let t_len = graph.shape(x)[0];
    if t_len > context_length {
        return Err(ModelError::ContextOverflow {
            len: t_len,
            max: context_length,
        });
    }
    // attention
    let normed = graph.rms_norm(x, block.attn_norm)?;
    let q = graph.matmul(normed, block.wq)?;
    let k = graph.matmul(normed, block.wk)?;
    let v = graph.matmul(normed, block.wv)?;
    let q = graph.rope(q, n_heads)?;
    let k = graph.rope(k, n_heads)?;
    let attn = graph.causal_attention(q, k, v, n_heads)?;
    let attn_out = graph.matmul(attn, block.wo)?;
    let x = graph.add(x, attn_out)?;
    // mlp
    let normed = graph.rms_norm(x, block.mlp_norm)?;
    let gate = graph.matmul(normed, block.w_gate)?;
    let up = graph.matmul(normed, block.w_up)?;
    let gate = graph.silu(gate);
    let hidden = graph.mul(gate, up)?;
    let mlp_out = graph.matmul(hidden, block.w_down)?;
    Ok(graph.add(x, mlp_out)?)
}

/// Runs one group: outer loop over iterations `m = 1..=M`, inner loop over
/// blocks `l = 1..=L`; every block input gets that block's encoding for `m`
/// added first (recursive architecture only).
pub fn group_forward<F: Real>(
    graph: &mut Graph<F>,
    mut x: Var,
    group: &GroupVars,
    spec: &GroupSpec,
    n_heads: usize,
    context_length: usize,
    group_index: usize,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<Var, ModelError> {
    for m in 1..=spec.n_iterations {
        for (l, block) in group.blocks.iter().enumerate() {
            if let Some(encodings) = &group.encodings {
                x = apply_iteration_encoding(graph, x, encodings, l, m)?;
            }
            x = block_forward(graph, x, block, n_heads, context_length)?;
            if let Some(t) = trace.as_deref_mut() {
                t.calls.push(BlockCall {
                    group: group_index,
                    block: l,
                    iteration: m,
                });
            }
        }
    }
    Ok(x)
}

/// Embeds `tokens`, runs every group in order, applies the final norm and the
/// output projection. Returns the `[T, V]` logits node; softmax is applied by
/// the loss or the sampler, not here.
pub fn model_forward<F: Real>(
    graph: &mut Graph<F>,
    vars: &WeightVars,
    config: &ModelConfig,
    tokens: &[u32],
    trace: Option<&mut ForwardTrace>,
) -> Result<Var, ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if tokens.len() > config.context_length {
        return Err(ModelError::ContextOverflow {
            len: tokens.len(),
            max: config.context_length,
        });
    }
    for (position, &id) in tokens.iter().enumerate() {
        if id as usize >= config.vocab_size {
            return Err(ModelError::TokenOutOfRange {
                id,
                position,
                vocab: config.vocab_size,
            });
        }
    }
    let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
    let mut x = graph.embedding(vars.token_embedding, &ids)?;
    let mut trace = trace;
    for (g, (group, spec)) in vars.groups.iter().zip(&config.groups).enumerate() {
        x = group_forward(
            graph,
            x,
            group,
            spec,
            config.n_heads,
            config.context_length,
            g,
            trace.as_deref_mut(),
        )?;
    }
    let x = graph.rms_norm(x, vars.final_norm)?;
    Ok(graph.matmul(x, vars.output_projection)?)
}

/// Convenience inference entry point: runs a forward pass on an internal graph
/// and returns the logits as a plain tensor.
pub fn model_logits(
    weights: &ModelWeights,
    config: &ModelConfig,
    tokens: &[u32],
) -> Result<Tensor, ModelError> {
    let mut graph: Graph<f32> = Graph::new();
    let vars = insert_weights(&mut graph, weights, config);
    let logits = model_forward(&mut graph, &vars, config, tokens, None)?;
    Ok(Tensor::new(
        graph.shape(logits).to_vec(),
        graph.value(logits).to_vec(),
    )?)
}

/// Mean next-token cross-entropy of `targets` given `inputs`, no weight update.
pub fn model_loss(
    weights: &ModelWeights,
    config: &ModelConfig,
    inputs: &[u32],
    targets: &[u32],
) -> Result<f32, ModelError> {
    let mut graph: Graph<f32> = Graph::new();
    let vars = insert_weights(&mut graph, weights, config);
    let logits = model_forward(&mut graph, &vars, config, inputs, None)?;
    let target_ids: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
    let loss = graph.cross_entropy(logits, &target_ids)?;
    Ok(graph.value_scalar(loss))
}

/// The full model loss as a gradient-check oracle subject: builds the
/// cross-entropy of a fixed (inputs, targets) pair from parameters supplied in
/// layout order, at any precision.
pub struct ModelLoss {
    config: ModelConfig,
    inputs: Vec<u32>,
    targets: Vec<u32>,
}

impl ModelLoss {
    pub fn new(config: ModelConfig, inputs: Vec<u32>, targets: Vec<u32>) -> Result<Self, ModelError> {
        config.validate()?;
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(ModelError::EmptyInput);
        }
        for (position, &id) in inputs.iter().chain(&targets).enumerate() {
            if id as usize >= config.vocab_size {
                return Err(ModelError::TokenOutOfRange {
                    id,
                    position: position % inputs.len(),
                    vocab: config.vocab_size,
                });
            }
        }
        Ok(Self {
            config,
            inputs,
            targets,
        })
    }
}

impl ScalarLoss for ModelLoss {
    fn build<F: Real>(
        &self,
        graph: &mut Graph<F>,
        params: &[Var],
    ) -> Result<Var, NumericsError> {
        let vars = WeightVars::from_ordered_vars(&self.config, params);
        let logits = model_forward(graph, &vars, &self.config, &self.inputs, None)
            .map_err(|e| match e {
                ModelError::Numerics(n) => n,
                other => panic!("validated oracle hit a structural error: {other}"),
            })?;
        let target_ids: Vec<usize> = self.targets.iter().map(|&t| t as usize).collect();
        graph.cross_entropy(logits, &target_ids)
    }
}
