//! Finite-difference oracle checks for every differentiable operation and for
//! the full model loss, per the numerics contract: analytic gradients must
//! match central differences (epsilon 1e-3) within 1e-2 relative error on
//! random inputs in [-1, 1].

use frailt::gradcheck::{grad_check, ScalarLoss};
use frailt::graph::{Graph, Var};
use frailt::model::{ModelConfig, ModelLoss, ModelWeights};
use frailt::rng::SplitMix64;
use frailt::tensor::{Real, Tensor};
use frailt::NumericsError;

const EPSILON: f64 = 1e-3;
const TOLERANCE: f64 = 1e-2;

fn random_tensor(shape: Vec<usize>, rng: &mut SplitMix64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
    Tensor::new(shape, data).unwrap()
}

/// Reduces any tensor to a scalar through a fixed random linear functional,
/// so per-op checks exercise full Jacobians rather than just row sums.
fn reduce<F: Real>(graph: &mut Graph<F>, x: Var, seed: u64) -> Result<Var, NumericsError> {
    let shape = graph.shape(x).to_vec();
    let (rows, cols) = (shape[0], shape[1]);
    let mut rng = SplitMix64::new(seed);
    let probe: Vec<F> = (0..cols)
        .map(|_| F::from_f64(rng.next_f64() * 2.0 - 1.0))
        .collect();
    let probe = graph.leaf(vec![cols, 1], probe)?;
    let partial = graph.matmul(x, probe)?; // [rows, 1]
    let mut rng2 = SplitMix64::new(seed ^ 0xabcdef);
    let collapse: Vec<F> = (0..rows)
        .map(|_| F::from_f64(rng2.next_f64() * 2.0 - 1.0))
        .collect();
    let collapse = graph.leaf(vec![1, rows], collapse)?;
    graph.matmul(collapse, partial)
}

struct MatmulLoss;
impl ScalarLoss for MatmulLoss {
    fn build<F: Real>(&self, g: &mut Graph<F>, p: &[Var]) -> Result<Var, NumericsError> {
        let y = g.matmul(p[0], p[1])?;
        reduce(g, y, 11)
    }
}

struct SoftmaxLoss;
impl ScalarLoss for SoftmaxLoss {
    fn build<F: Real>(&self, g: &mut Graph<F>, p: &[Var]) -> Result<Var, NumericsError> {
        let y = g.softmax_rows(p[0]);
        reduce(g, y, 22)
    }
}

struct RmsNormLoss;
impl ScalarLoss for RmsNormLoss {
    fn build<F: Real>(&self, g: &mut Graph<F>, p: &[Var]) -> Result<Var, NumericsError> {
        let y = g.rms_norm(p[0], p[1])?;
        reduce(g, y, 33)
    }
}

struct CrossEntropyLoss(Vec<usize>);
impl ScalarLoss for CrossEntropyLoss {
    fn build<F: Real>(&self, g: &mut Graph<F>, p: &[Var]) -> Result<Var, NumericsError> {
        g.cross_entropy(p[0], &self.0)
    }
}

struct AttentionLoss {
    n_heads: usize,
}
impl ScalarLoss for AttentionLoss {
    fn build<F: Real>(&self, g: &mut Graph<F>, p: &[Var]) -> Result<Var, NumericsError> {
        let q = g.rope(p[0], self.n_heads)?;
        let k = g.rope(p[1], self.n_heads)?;
        let y = g.causal_attention(q, k, p[2], self.n_heads)?;
        reduce(g, y, 44)
    }
}

struct SiluMulLoss;
impl ScalarLoss for SiluMulLoss {
    fn build<F: Real>(&self, g: &mut Graph<F>, p: &[Var]) -> Result<Var, NumericsError> {
        let s = g.silu(p[0]);
        let y = g.mul(s, p[1])?;
        reduce(g, y, 55)
    }
}

struct BroadcastLoss;
impl ScalarLoss for BroadcastLoss {
    fn build<F: Real>(&self, g: &mut Graph<F>, p: &[Var]) -> Result<Var, NumericsError> {
        let y = g.add_row_broadcast(p[0], p[1])?;
        reduce(g, y, 66)
    }
}

struct EmbeddingLoss(Vec<usize>);
impl ScalarLoss for EmbeddingLoss {
    fn build<F: Real>(&self, g: &mut Graph<F>, p: &[Var]) -> Result<Var, NumericsError> {
        let y = g.embedding(p[0], &self.0)?;
        reduce(g, y, 77)
    }
}

#[test]
fn matmul_backward_matches_finite_differences() {
    let mut rng = SplitMix64::new(1);
    let a = random_tensor(vec![3, 4], &mut rng);
    let b = random_tensor(vec![4, 5], &mut rng);
    let report = grad_check(&MatmulLoss, &[a, b], EPSILON).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{}", report.max_rel_error);
}

#[test]
fn softmax_backward_matches_finite_differences() {
    let mut rng = SplitMix64::new(2);
    let x = random_tensor(vec![4, 6], &mut rng);
    let report = grad_check(&SoftmaxLoss, &[x], EPSILON).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{}", report.max_rel_error);
}

#[test]
fn rms_norm_backward_matches_finite_differences() {
    let mut rng = SplitMix64::new(3);
    let x = random_tensor(vec![4, 8], &mut rng);
    let w = random_tensor(vec![8], &mut rng);
    let report = grad_check(&RmsNormLoss, &[x, w], EPSILON).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{}", report.max_rel_error);
}

#[test]
fn cross_entropy_backward_matches_finite_differences() {
    let mut rng = SplitMix64::new(4);
    let logits = random_tensor(vec![5, 7], &mut rng);
    let targets = vec![0, 3, 6, 2, 5];
    let report = grad_check(&CrossEntropyLoss(targets), &[logits], EPSILON).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{}", report.max_rel_error);
}

#[test]
fn attention_with_rope_backward_matches_finite_differences() {
    let mut rng = SplitMix64::new(5);
    let q = random_tensor(vec![5, 8], &mut rng);
    let k = random_tensor(vec![5, 8], &mut rng);
    let v = random_tensor(vec![5, 8], &mut rng);
    let report = grad_check(&AttentionLoss { n_heads: 2 }, &[q, k, v], EPSILON).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{}", report.max_rel_error);
}

#[test]
fn silu_mul_backward_matches_finite_differences() {
    let mut rng = SplitMix64::new(6);
    let a = random_tensor(vec![3, 6], &mut rng);
    let b = random_tensor(vec![3, 6], &mut rng);
    let report = grad_check(&SiluMulLoss, &[a, b], EPSILON).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{}", report.max_rel_error);
}

#[test]
fn broadcast_add_backward_matches_finite_differences() {
    let mut rng = SplitMix64::new(7);
    let x = random_tensor(vec![4, 6], &mut rng);
    let v = random_tensor(vec![6], &mut rng);
    let report = grad_check(&BroadcastLoss, &[x, v], EPSILON).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{}", report.max_rel_error);
}

#[test]
fn embedding_backward_matches_finite_differences() {
    let mut rng = SplitMix64::new(8);
    let table = random_tensor(vec![10, 6], &mut rng);
    let report = grad_check(&EmbeddingLoss(vec![1, 4, 4, 9, 0]), &[table], EPSILON).unwrap();
    assert!(report.max_rel_error < TOLERANCE, "{}", report.max_rel_error);
}

/// Whole-model oracle: every parameter tensor of a small recursive model,
/// including both iteration-encoding vectors, checks out against central
/// finite differences of the cross-entropy loss.
#[test]
fn tiny_recursive_model_loss_gradients_match() {
    let config = ModelConfig::from_arch_spec("1x2", 16, 2, 32, 8).unwrap();
    let mut weights = ModelWeights::init(&config, 21);
    // Non-zero encodings so their gradient path is exercised away from the
    // zero-init point.
    let mut rng = SplitMix64::new(77);
    for (name, tensor) in weights.named_tensors_mut() {
        if name.contains(".iter_enc.") {
            for v in tensor.data_mut() {
                *v = (rng.next_f64() * 0.2 - 0.1) as f32;
            }
        }
    }
    let inputs = vec![3, 1, 4, 1, 5, 9, 2, 6];
    let targets = vec![1, 4, 1, 5, 9, 2, 6, 5];
    let loss = ModelLoss::new(config, inputs, targets).unwrap();
    let params: Vec<Tensor> = weights
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.clone())
        .collect();
    let report = grad_check(&loss, &params, EPSILON).unwrap();
    assert!(
        report.max_rel_error < TOLERANCE,
        "max rel error {} at {:?}",
        report.max_rel_error,
        report.worst
    );
}
