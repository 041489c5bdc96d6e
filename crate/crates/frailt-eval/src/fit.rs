//! Score-versus-loss analysis: the loss-threshold filter and ordinary least
//! squares of score against the natural log of validation loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("validation losses must be positive, got {0}")]
    NonPositiveLoss(f64),

    #[error("log-losses have zero variance; the line is vertical")]
    ZeroVariance,
}

/// Least-squares line of score against `ln(val_loss)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Loss threshold applied before fitting, when one was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

/// Keeps points with `val_loss <= threshold`; the high-loss regime carries no
/// measurable consistency/plot signal and would distort the line.
pub fn filter_by_loss(points: &[(f64, f64)], threshold: f64) -> Vec<(f64, f64)> {
    points
        .iter()
        .copied()
        .filter(|&(loss, _)| loss <= threshold)
        .collect()
}

/// Ordinary least squares of `score` against `ln(loss)` over `(loss, score)`
/// points. `r_squared` is 1 exactly when the residuals vanish (including the
/// degenerate all-equal-scores case).
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for &(loss, _) in points {
        if !(loss > 0.0) {
            return Err(FitError::NonPositiveLoss(loss));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(loss, _)| loss.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, score)| score).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(FitError::ZeroVariance);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let predicted = intercept + slope * x;
        ss_res += (y - predicted) * (y - predicted);
        ss_tot += (y - y_mean) * (y - y_mean);
    }
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(PowerLawFit {
        slope,
        intercept,
        r_squared,
        n_points: points.len(),
        threshold: None,
    })
}

/// Filter then fit, recording the threshold in the result.
pub fn filter_and_fit(points: &[(f64, f64)], threshold: f64) -> Result<PowerLawFit, FitError> {
    let kept = filter_by_loss(points, threshold);
    let mut fit = fit_power_law(&kept)?;
    fit.threshold = Some(threshold);
    Ok(fit)
}
