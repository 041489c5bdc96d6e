//! Finite-difference gradient oracle.
//!
//! [`grad_check`] compares the `f32` reverse-mode gradients of a scalar loss
//! against central finite differences of the same loss. The loss is described
//! once, generically, through [`ScalarLoss`]; the difference quotients are
//! evaluated on the `f64` instantiation of the identical graph code so the
//! oracle measures backward-pass correctness instead of `f32` rounding jitter.

use crate::error::NumericsError;
use crate::graph::{Graph, Var};
use crate::tensor::{Real, Tensor};

/// Maximum entries sampled per parameter tensor, to bound oracle runtime.
pub const MAX_SAMPLED_ENTRIES: usize = 64;

/// A scalar loss expressed as graph construction, evaluable at any precision.
pub trait ScalarLoss {
    fn build<F: Real>(&self, graph: &mut Graph<F>, params: &[Var])
        -> Result<Var, NumericsError>;
}

/// Worst sampled entry, for diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct WorstEntry {
    pub param: usize,
    pub entry: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `max |a - n| / max(|a|, |n|, 1e-6)` over all sampled entries.
    pub max_rel_error: f64,
    /// Per-parameter maximum relative error, same order as the input list.
    pub per_param: Vec<f64>,
    pub worst: Option<WorstEntry>,
}

fn eval_loss<F: Real, L: ScalarLoss>(
    loss: &L,
    params: &[Vec<F>],
    shapes: &[Vec<usize>],
) -> Result<f64, NumericsError> {
    let mut graph: Graph<F> = Graph::new();
    let vars: Vec<Var> = params
        .iter()
        .zip(shapes)
        .map(|(data, shape)| graph.leaf(shape.clone(), data.clone()))
        .collect::<Result<_, _>>()?;
    let out = loss.build(&mut graph, &vars)?;
    let value = graph.value_scalar(out).to_f64();
    if !value.is_finite() {
        return Err(NumericsError::NonFiniteLoss);
    }
    Ok(value)
}

/// Checks analytic gradients of `loss` w.r.t. every tensor in `params` against
/// central finite differences with the given `epsilon`, sampling at most
/// [`MAX_SAMPLED_ENTRIES`] entries per tensor.
pub fn grad_check<L: ScalarLoss>(
    loss: &L,
    params: &[Tensor],
    epsilon: f64,
) -> Result<GradCheckReport, NumericsError> {
    let shapes: Vec<Vec<usize>> = params.iter().map(|t| t.shape().to_vec()).collect();

    // Analytic side: f32 forward + backward, exactly the production path.
    let analytic: Vec<Vec<f32>> = {
        let mut graph: Graph<f32> = Graph::new();
        let vars: Vec<Var> = params.iter().map(|t| graph.leaf_tensor(t)).collect();
        let out = loss.build(&mut graph, &vars)?;
        if !graph.value_scalar(out).is_finite() {
            return Err(NumericsError::NonFiniteLoss);
        }
        graph.backward(out)?;
        vars.iter().map(|&v| graph.grad(v).to_vec()).collect()
    };

    // Numeric side: central differences at f64 over the same graph code.
    let mut values: Vec<Vec<f64>> = params
        .iter()
        .map(|t| t.data().iter().map(|&x| x as f64).collect())
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_param: vec![0.0; params.len()],
        worst: None,
    };

    for p in 0..params.len() {
        let len = values[p].len();
        let step = (len / MAX_SAMPLED_ENTRIES).max(1);
        let mut entry = 0;
        while entry < len {
            let original = values[p][entry];
            values[p][entry] = original + epsilon;
            let plus = eval_loss(loss, &values, &shapes)?;
            values[p][entry] = original - epsilon;
            let minus = eval_loss(loss, &values, &shapes)?;
            values[p][entry] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[p][entry] as f64;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > report.per_param[p] {
                report.per_param[p] = rel;
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some(WorstEntry {
                    param: p,
                    entry,
                    analytic: a,
                    numeric,
                });
            }
            entry += step;
        }
    }
    Ok(report)
}
