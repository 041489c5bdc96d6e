//! Budget-matched training with AdamW, cosine schedule, and deterministic runs.
//!
//! Every source of randomness is derived from the config seed, so a full run
//! is a pure function of (configs, corpus, vocab): same inputs, bit-identical
//! final checkpoint.

mod checkpoint;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use thiserror::Error;

use crate::data::{validation_windows, Batch, BatchStream, Corpus, DataError};
use crate::error::NumericsError;
use crate::graph::Graph;
use crate::model::{model_forward, tensor_layout, ModelConfig, ModelError, ModelWeights};
use crate::reference;
use crate::tokenizer::Vocab;

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.95;
pub const ADAM_EPS: f32 = 1e-8;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at step {step} (batch digest {batch_digest:#018x})")]
    NonFiniteLoss { step: u64, batch_digest: u64 },

    #[error("{standard_layers} standard layers are not divisible by {frailt_blocks} blocks; nearest valid block counts: {suggestions:?}")]
    BudgetMismatch {
        standard_layers: usize,
        frailt_blocks: usize,
        suggestions: Vec<usize>,
    },

    #[error("effective depths differ: standard {standard} vs frailt {frailt}; refusing to run an unmatched comparison")]
    DepthMismatch { standard: usize, frailt: usize },

    #[error("invalid train config: {0}")]
    InvalidConfig(String),

    #[error("validation set is empty")]
    EmptyValidation,

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub peak_lr: f32,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub weight_decay: f32,
    pub grad_clip: f32,
    pub eval_interval: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            peak_lr: 5e-4,
            warmup_steps: 100,
            total_steps: 1000,
            batch_size: 8,
            weight_decay: 0.1,
            grad_clip: 1.0,
            eval_interval: 50,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.warmup_steps > self.total_steps {
            return Err(TrainError::InvalidConfig(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.total_steps == 0 || self.batch_size == 0 || self.eval_interval == 0 {
            return Err(TrainError::InvalidConfig(
                "total_steps, batch_size, and eval_interval must be positive".into(),
            ));
        }
        if !(self.peak_lr >= 0.0) || !(self.grad_clip > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(TrainError::InvalidConfig(
                "peak_lr/weight_decay must be >= 0 and grad_clip > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One history entry; `val_loss` is present on evaluation steps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub train_loss: f32,
    pub val_loss: Option<f32>,
}

/// AdamW first/second moments for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

/// Mutable training state: step counter, per-parameter moments (layout order),
/// the run seed, and the loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub step: u64,
    pub moments: Vec<Moments>,
    pub rng_state: u64,
    pub history: Vec<LossPoint>,
}

impl TrainingState {
    pub fn new(model_config: &ModelConfig, seed: u64) -> Self {
        let moments = tensor_layout(model_config)
            .iter()
            .map(|(_, shape)| {
                let n = shape.iter().product();
                Moments {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                }
            })
            .collect();
        Self {
            step: 0,
            moments,
            rng_state: seed,
            history: Vec::new(),
        }
    }
}

/// Learning rate at `step`: linear warmup from 0 to the peak over
/// `warmup_steps`, then cosine decay to a tenth of the peak at `total_steps`.
pub fn lr_at(step: u64, config: &TrainConfig) -> f64 {
    let peak = config.peak_lr as f64;
    if config.warmup_steps > 0 && step <= config.warmup_steps {
        return peak * step as f64 / config.warmup_steps as f64;
    }
    if config.total_steps <= config.warmup_steps {
        return peak;
    }
    let floor = peak / 10.0;
    let progress =
        (step - config.warmup_steps) as f64 / (config.total_steps - config.warmup_steps) as f64;
    floor + 0.5 * (peak - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Whether decoupled weight decay applies to the named parameter. Only the
/// projection matrices decay; norms, embeddings, and iteration encodings are
/// exempt (decaying zero-initialized encodings would pull the model back to
/// the plain weight-shared recursion).
pub fn weight_decay_applies(name: &str) -> bool {
    const DECAYED_SUFFIXES: [&str; 7] =
        [".wq", ".wk", ".wv", ".wo", ".w_gate", ".w_up", ".w_down"];
    name == "output_projection" || DECAYED_SUFFIXES.iter().any(|s| name.ends_with(s))
}

/// In-place AdamW update for one tensor at (1-based) step `t`.
pub fn adamw_update(
    weights: &mut [f32],
    grads: &[f32],
    moments: &mut Moments,
    lr: f64,
    weight_decay: f32,
    t: u64,
) {
    let lr = lr as f32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bias2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for i in 0..weights.len() {
        let g = grads[i];
        moments.m[i] = ADAM_BETA1 * moments.m[i] + (1.0 - ADAM_BETA1) * g;
        moments.v[i] = ADAM_BETA2 * moments.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = moments.m[i] / bias1;
        let v_hat = moments.v[i] / bias2;
        weights[i] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS));
        if weight_decay != 0.0 {
            weights[i] -= lr * weight_decay * weights[i];
        }
    }
}

/// Scales all gradients to global norm `clip` when they exceed it. Returns the
/// pre-clip norm.
pub fn clip_global_norm(grads: &mut [Vec<f32>], clip: f32) -> f64 {
    let mut sum_sq = 0.0f64;
    for g in grads.iter() {
        for &v in g {
            sum_sq += (v as f64) * (v as f64);
        }
    }
    let norm = sum_sq.sqrt();
    if norm > clip as f64 {
        let factor = (clip as f64 / norm) as f32;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }
    norm
}

/// One optimizer step: batched forward, mean cross-entropy, backward, global
/// gradient clip, AdamW with the scheduled learning rate. Deterministic given
/// (weights, state, batch). Returns the pre-update batch loss.
pub fn train_step(
    state: &mut TrainingState,
    weights: &mut ModelWeights,
    batch: &Batch,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<f32, TrainError> {
    let mut graph: Graph<f32> = Graph::new();
    let ordered_vars: Vec<crate::graph::Var> = weights
        .named_tensors()
        .into_iter()
        .map(|(_, t)| graph.leaf_tensor(t))
        .collect();
    let vars = crate::model::WeightVars::from_ordered_vars(model_config, &ordered_vars);

    let mut total = None;
    for (inputs, targets) in batch.inputs.iter().zip(&batch.targets) {
        let logits = model_forward(&mut graph, &vars, model_config, inputs, None)?;
        let target_ids: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
        let ce = graph.cross_entropy(logits, &target_ids)?;
        total = Some(match total {
            None => ce,
            Some(acc) => graph.add(acc, ce)?,
        });
    }
    let total = total.ok_or_else(|| TrainError::InvalidConfig("empty batch".into()))?;
    let loss_node = graph.scale(total, 1.0 / batch.inputs.len() as f64);
    let loss = graph.value_scalar(loss_node);
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            step: state.step,
            batch_digest: batch.digest(),
        });
    }
    graph.backward(loss_node)?;

    let mut grads: Vec<Vec<f32>> = ordered_vars
        .iter()
        .map(|&v| graph.grad(v).to_vec())
        .collect();
    clip_global_norm(&mut grads, train_config.grad_clip);

    state.step += 1;
    let lr = lr_at(state.step, train_config);
    let t = state.step;
    for ((name, tensor), (grad, moments)) in weights
        .named_tensors_mut()
        .into_iter()
        .zip(grads.iter().zip(state.moments.iter_mut()))
    {
        let decay = if weight_decay_applies(&name) {
            train_config.weight_decay
        } else {
            0.0
        };
        adamw_update(tensor.data_mut(), grad, moments, lr, decay, t);
    }
    state.history.push(LossPoint {
        step: state.step,
        train_loss: loss,
        val_loss: None,
    });
    Ok(loss)
}

/// Mean next-token cross-entropy over all validation windows: total NLL
/// divided by total target positions. Never mutates weights.
pub fn evaluate_validation_loss(
    weights: &ModelWeights,
    model_config: &ModelConfig,
    windows: &[(Vec<u32>, Vec<u32>)],
) -> Result<f32, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    let mut total_nll = 0.0f64;
    let mut total_tokens = 0usize;
    for (inputs, targets) in windows {
        let loss = crate::model::model_loss(weights, model_config, inputs, targets)?;
        total_nll += loss as f64 * targets.len() as f64;
        total_tokens += targets.len();
    }
    Ok((total_nll / total_tokens as f64) as f32)
}

/// Iterations the recursive model must run so `frailt_blocks` blocks match the
/// effective depth of `standard_layers` plain layers.
pub fn equalize_budget(standard_layers: usize, frailt_blocks: usize) -> Result<usize, TrainError> {
    if frailt_blocks == 0 || standard_layers == 0 || standard_layers % frailt_blocks != 0 {
        let mut divisors: Vec<usize> = (1..=standard_layers)
            .filter(|d| standard_layers % d == 0)
            .collect();
        divisors.sort_by_key(|&d| d.abs_diff(frailt_blocks));
        divisors.truncate(2);
        divisors.sort_unstable();
        return Err(TrainError::BudgetMismatch {
            standard_layers,
            frailt_blocks,
            suggestions: divisors,
        });
    }
    Ok(standard_layers / frailt_blocks)
}

/// A training run in progress: owns the weights, optimizer state, and data
/// stream. Supports starting fresh or resuming from a checkpoint.
pub struct TrainingRun {
    model_config: ModelConfig,
    train_config: TrainConfig,
    weights: ModelWeights,
    state: TrainingState,
    stream: BatchStream,
    val_windows: Vec<(Vec<u32>, Vec<u32>)>,
}

impl TrainingRun {
    pub fn new(
        model_config: ModelConfig,
        train_config: TrainConfig,
        corpus: &Corpus,
        vocab: &Vocab,
    ) -> Result<Self, TrainError> {
        model_config.validate()?;
        train_config.validate()?;
        let weights = ModelWeights::init(&model_config, train_config.seed);
        let state = TrainingState::new(&model_config, train_config.seed);
        Self::assemble(model_config, train_config, weights, state, corpus, vocab)
    }

    /// Resumes a checkpointed run: the batch stream is fast-forwarded to the
    /// recorded step, so the continuation sees exactly the batches the
    /// uninterrupted run would have.
    pub fn resume(
        model_config: ModelConfig,
        train_config: TrainConfig,
        weights: ModelWeights,
        state: TrainingState,
        corpus: &Corpus,
        vocab: &Vocab,
    ) -> Result<Self, TrainError> {
        model_config.validate()?;
        train_config.validate()?;
        Self::assemble(model_config, train_config, weights, state, corpus, vocab)
    }

    fn assemble(
        model_config: ModelConfig,
        train_config: TrainConfig,
        weights: ModelWeights,
        state: TrainingState,
        corpus: &Corpus,
        vocab: &Vocab,
    ) -> Result<Self, TrainError> {
        let train_tokens = Corpus::tokenize(corpus.train_stories(), vocab);
        let mut stream = BatchStream::new(
            train_tokens,
            model_config.context_length,
            train_config.batch_size,
            train_config.seed,
        )?;
        stream.skip_batches(state.step);
        let val_tokens = Corpus::tokenize(corpus.validation_stories(), vocab);
        let val_windows = validation_windows(&val_tokens, model_config.context_length);
        Ok(Self {
            model_config,
            train_config,
            weights,
            state,
            stream,
            val_windows,
        })
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn state(&self) -> &TrainingState {
        &self.state
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model_config
    }

    pub fn is_complete(&self) -> bool {
        self.state.step >= self.train_config.total_steps
    }

    pub fn has_validation(&self) -> bool {
        !self.val_windows.is_empty()
    }

    pub fn validation_loss(&self) -> Result<f32, TrainError> {
        evaluate_validation_loss(&self.weights, &self.model_config, &self.val_windows)
    }

    /// Runs one step; evaluates validation on eval-interval steps and the
    /// final step. Returns the history point recorded for this step.
    pub fn step(&mut self) -> Result<LossPoint, TrainError> {
        let batch = self.stream.next_batch();
        train_step(
            &mut self.state,
            &mut self.weights,
            &batch,
            &self.model_config,
            &self.train_config,
        )?;
        let step = self.state.step;
        let due = step % self.train_config.eval_interval == 0
            || step == self.train_config.total_steps;
        if due && self.has_validation() {
            let val = self.validation_loss()?;
            self.state
                .history
                .last_mut()
                .expect("train_step recorded a point")
                .val_loss = Some(val);
        }
        Ok(*self.state.history.last().expect("recorded"))
    }

    pub fn run_to_completion(
        &mut self,
        mut progress: impl FnMut(&LossPoint),
    ) -> Result<(), TrainError> {
        while !self.is_complete() {
            let point = self.step()?;
            progress(&point);
        }
        Ok(())
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        Checkpoint {
            config: self.model_config,
            weights: self.weights,
            state: Some(self.state),
        }
    }
}

/// Result of one arm of a paired experiment.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunSummary {
    pub arch_label: String,
    pub model_kind: &'static str,
    pub embedding_dim: usize,
    pub effective_depth: usize,
    pub param_total: usize,
    pub final_train_loss: f32,
    pub final_val_loss: Option<f32>,
    pub paper_reference_loss: Option<f32>,
    pub history: Vec<LossPoint>,
}

/// Side-by-side comparison of a standard model and a budget-matched recursive
/// model trained under one protocol.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExperimentReport {
    pub standard: RunSummary,
    pub frailt: RunSummary,
    pub train_config: TrainConfig,
    pub corpus_digest: u64,
}

fn summarize(run: &TrainingRun) -> RunSummary {
    let cfg = &run.model_config;
    let kind = match cfg.architecture_kind {
        crate::model::ArchitectureKind::Standard => "standard",
        crate::model::ArchitectureKind::Frailt => "frailt",
    };
    let label = cfg.arch_label();
    RunSummary {
        arch_label: label.clone(),
        model_kind: kind,
        embedding_dim: cfg.embedding_dim,
        effective_depth: cfg.effective_depth(),
        param_total: crate::model::param_count(cfg).total,
        final_train_loss: run
            .state
            .history
            .last()
            .map(|p| p.train_loss)
            .unwrap_or(f32::NAN),
        final_val_loss: run.state.history.iter().rev().find_map(|p| p.val_loss),
        paper_reference_loss: reference::lookup(kind, &label, cfg.embedding_dim),
        history: run.state.history.clone(),
    }
}

/// Trains both arms under the same protocol, seed, and data. Refuses to run
/// when effective depths (hence compute budgets) differ.
pub fn run_experiment(
    standard_config: ModelConfig,
    frailt_config: ModelConfig,
    train_config: TrainConfig,
    corpus: &Corpus,
    vocab: &Vocab,
    mut progress: impl FnMut(&str, &LossPoint),
) -> Result<ExperimentReport, TrainError> {
    let (sd, fd) = (
        standard_config.effective_depth(),
        frailt_config.effective_depth(),
    );
    if sd != fd {
        return Err(TrainError::DepthMismatch {
            standard: sd,
            frailt: fd,
        });
    }
    let mut standard = TrainingRun::new(standard_config, train_config.clone(), corpus, vocab)?;
    standard.run_to_completion(|p| progress("standard", p))?;
    let mut frailt = TrainingRun::new(frailt_config, train_config.clone(), corpus, vocab)?;
    frailt.run_to_completion(|p| progress("frailt", p))?;
    Ok(ExperimentReport {
        standard: summarize(&standard),
        frailt: summarize(&frailt),
        train_config,
        corpus_digest: corpus.digest(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model() -> ModelConfig {
        ModelConfig::from_arch_spec("1", 16, 2, 64, 8).unwrap()
    }

    fn tiny_train(total: u64) -> TrainConfig {
        TrainConfig {
            peak_lr: 1e-3,
            warmup_steps: 2,
            total_steps: total,
            batch_size: 2,
            weight_decay: 0.1,
            grad_clip: 1.0,
            eval_interval: 5,
            seed: 7,
        }
    }

    fn tiny_batch() -> Batch {
        Batch {
            inputs: vec![vec![1, 2, 3, 4], vec![5, 6, 7, 8]],
            targets: vec![vec![2, 3, 4, 5], vec![6, 7, 8, 9]],
        }
    }

    #[test]
    fn lr_schedule_endpoints() {
        let cfg = TrainConfig {
            peak_lr: 4e-4,
            warmup_steps: 100,
            total_steps: 1000,
            ..TrainConfig::default()
        };
        let peak = cfg.peak_lr as f64;
        assert_eq!(lr_at(0, &cfg), 0.0);
        assert_eq!(lr_at(100, &cfg), peak);
        assert!((lr_at(1000, &cfg) - peak / 10.0).abs() < 1e-15);
        // midpoint of cosine: halfway between peak and floor
        let mid = lr_at(550, &cfg);
        assert!((mid - (peak + peak / 10.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_leaves_weights_bit_identical() {
        let model_cfg = tiny_model();
        let train_cfg = TrainConfig {
            peak_lr: 0.0,
            ..tiny_train(10)
        };
        let mut weights = ModelWeights::init(&model_cfg, 3);
        let before = weights.digest();
        let mut state = TrainingState::new(&model_cfg, 3);
        train_step(&mut state, &mut weights, &tiny_batch(), &model_cfg, &train_cfg).unwrap();
        assert_eq!(weights.digest(), before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn repeated_batch_loss_decreases() {
        let model_cfg = tiny_model();
        let train_cfg = tiny_train(20);
        let mut weights = ModelWeights::init(&model_cfg, 3);
        let mut state = TrainingState::new(&model_cfg, 3);
        let batch = tiny_batch();
        let first = train_step(&mut state, &mut weights, &batch, &model_cfg, &train_cfg).unwrap();
        let mut last = first;
        for _ in 0..10 {
            last = train_step(&mut state, &mut weights, &batch, &model_cfg, &train_cfg).unwrap();
        }
        assert!(
            last < first,
            "loss should fall on a repeated batch: {first} -> {last}"
        );
    }

    #[test]
    fn clip_scales_by_norm_ratio() {
        let mut grads = vec![vec![6.0f32, 8.0]]; // norm 10
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 10.0).abs() < 1e-9);
        assert!((grads[0][0] - 0.6).abs() < 1e-6);
        assert!((grads[0][1] - 0.8).abs() < 1e-6);

        let mut small = vec![vec![0.3f32, 0.4]]; // norm 0.5, untouched
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0], vec![0.3, 0.4]);
    }

    #[test]
    fn decay_is_decoupled_and_selective() {
        // With zero gradients the Adam term vanishes; only decayed tensors move.
        let mut moments = Moments {
            m: vec![0.0; 2],
            v: vec![0.0; 2],
        };
        let mut decayed = vec![1.0f32, -2.0];
        adamw_update(&mut decayed, &[0.0, 0.0], &mut moments, 0.1, 0.5, 1);
        for (w, orig) in decayed.iter().zip([1.0f32, -2.0]) {
            assert!((w - orig * (1.0 - 0.1 * 0.5)).abs() < 1e-6);
        }
        let mut exempt = vec![1.0f32, -2.0];
        let mut moments2 = Moments {
            m: vec![0.0; 2],
            v: vec![0.0; 2],
        };
        adamw_update(&mut exempt, &[0.0, 0.0], &mut moments2, 0.1, 0.0, 1);
        assert_eq!(exempt, vec![1.0, -2.0]);
    }

    #[test]
    fn decay_predicate_matches_parameter_classes() {
        assert!(weight_decay_applies("g0.b0.wq"));
        assert!(weight_decay_applies("g3.b1.w_down"));
        assert!(weight_decay_applies("output_projection"));
        assert!(!weight_decay_applies("token_embedding"));
        assert!(!weight_decay_applies("g0.b0.attn_norm"));
        assert!(!weight_decay_applies("final_norm"));
        assert!(!weight_decay_applies("g0.b0.iter_enc.3"));
    }

    #[test]
    fn equalize_budget_divides_depth() {
        assert_eq!(equalize_budget(8, 2).unwrap(), 4);
        assert_eq!(equalize_budget(4, 4).unwrap(), 1);
        let err = equalize_budget(8, 3).unwrap_err();
        match err {
            TrainError::BudgetMismatch { suggestions, .. } => {
                assert_eq!(suggestions, vec![2, 4]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validation_loss_is_pure_and_near_ln_vocab_untrained() {
        let model_cfg = tiny_model();
        let weights = ModelWeights::init(&model_cfg, 5);
        let windows = vec![
            (vec![1u32, 2, 3, 4], vec![2u32, 3, 4, 5]),
            (vec![9, 8, 7, 6], vec![8, 7, 6, 5]),
        ];
        let digest_before = weights.digest();
        let a = evaluate_validation_loss(&weights, &model_cfg, &windows).unwrap();
        let b = evaluate_validation_loss(&weights, &model_cfg, &windows).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(weights.digest(), digest_before);
        let ln_v = (model_cfg.vocab_size as f32).ln();
        assert!((a - ln_v).abs() < 0.3, "untrained loss {a} vs ln V {ln_v}");
    }

    #[test]
    fn validation_loss_matches_manual_accumulation() {
        let model_cfg = tiny_model();
        let weights = ModelWeights::init(&model_cfg, 5);
        let windows = vec![
            (vec![1u32, 2, 3, 4], vec![2u32, 3, 4, 5]),
            (vec![9, 8, 7, 6], vec![8, 7, 6, 5]),
        ];
        let got = evaluate_validation_loss(&weights, &model_cfg, &windows).unwrap();
        // Independent accumulation: softmax each position from raw logits.
        let mut nll = 0.0f64;
        let mut count = 0usize;
        for (inputs, targets) in &windows {
            let logits = crate::model::model_logits(&weights, &model_cfg, inputs).unwrap();
            let v = model_cfg.vocab_size;
            for (t, &target) in targets.iter().enumerate() {
                let row = &logits.data()[t * v..(t + 1) * v];
                let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let sum: f64 = row.iter().map(|&x| ((x - max) as f64).exp()).sum();
                let logp = (row[target as usize] - max) as f64 - sum.ln();
                nll -= logp;
                count += 1;
            }
        }
        let expected = (nll / count as f64) as f32;
        assert!((got - expected).abs() < 1e-5, "{got} vs {expected}");
    }

    #[test]
    fn empty_validation_is_an_error() {
        let model_cfg = tiny_model();
        let weights = ModelWeights::init(&model_cfg, 5);
        assert!(matches!(
            evaluate_validation_loss(&weights, &model_cfg, &[]),
            Err(TrainError::EmptyValidation)
        ));
    }

    #[test]
    fn experiment_refuses_depth_mismatch() {
        let corpus = Corpus::from_stories(
            (0..30).map(|i| format!("a tiny story number {i} for testing")).collect(),
            0.1,
        )
        .unwrap();
        let vocab = crate::tokenizer::train_bpe(corpus.stories(), 270).unwrap().vocab;
        let standard = ModelConfig::from_arch_spec("2", 16, 2, vocab.size(), 8).unwrap();
        let frailt = ModelConfig::from_arch_spec("1x3", 16, 2, vocab.size(), 8).unwrap();
        let err = run_experiment(
            standard,
            frailt,
            tiny_train(2),
            &corpus,
            &vocab,
            |_, _| {},
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::DepthMismatch { standard: 2, frailt: 3 }));
    }
}
