//! Posterior summaries: inclusion probabilities, ROC cutoff, thresholded
//! point estimates, and evaluation metrics.

use crate::error::{FenError, Result};
use crate::grid::TensorShape;
use crate::model::{indicator_from_norm, Dataset, ModelState};
use crate::quadrature::GaussRule;
use crate::sampler::ChainSummary;
use crate::spline::SplineBasis;

/// `P_i`: posterior mean of the smoothed indicator of entry `i`.
pub fn inclusion_probability(summary: &ChainSummary) -> Vec<f64> {
    let c = summary.count.max(1) as f64;
    summary.sum_ind.iter().map(|s| (s / c).clamp(0.0, 1.0)).collect()
}

/// Inclusion probabilities computed directly from stored draws.
pub fn inclusion_from_draws(draws: &[ModelState], k: usize, eps0: f64) -> Vec<f64> {
    let p = draws.first().map_or(0, |d| d.alpha.len() / k);
    let mut sum = vec![0.0; p];
    for d in draws {
        for (t, a) in d.alpha.chunks(k).enumerate() {
            sum[t] += indicator_from_norm(a.iter().map(|v| v * v).sum(), d.lambda, eps0);
        }
    }
    sum.iter().map(|s| s / draws.len().max(1) as f64).collect()
}

/// Estimated ROC point `(TPR, TNR)` of the cutoff `c`, with the inclusion
/// probabilities standing in for the unknown truth.
pub fn roc_point(prob: &[f64], c: f64) -> (f64, f64) {
    let total_p: f64 = prob.iter().sum();
    let total_q: f64 = prob.iter().map(|p| 1.0 - p).sum();
    let (mut tp, mut tn) = (0.0, 0.0);
    for &p in prob {
        if p > c {
            tp += p;
        } else {
            tn += 1.0 - p;
        }
    }
    let tpr = if total_p > 0.0 { tp / total_p } else { 1.0 };
    let tnr = if total_q > 0.0 { tn / total_q } else { 1.0 };
    (tpr, tnr)
}

/// Distance of an ROC point from the ideal corner `(1, 1)`.
pub fn roc_distance((tpr, tnr): (f64, f64)) -> f64 {
    ((1.0 - tpr).powi(2) + (1.0 - tnr).powi(2)).sqrt()
}

/// Chosen cutoff and its ROC point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub c0: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub distance: f64,
    /// Set when all probabilities are equal and no cutoff separates them.
    pub degenerate: bool,
}

/// Cutoff minimizing the distance to `(1, 1)` over `{0, 1}` and the midpoints
/// between consecutive distinct values of `prob`. Ties go to the smallest
/// midpoint, and midpoints win over the sentinels.
pub fn select_cutoff(prob: &[f64]) -> Cutoff {
    let mut uniq: Vec<f64> = prob.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    if uniq.len() <= 1 {
        let (tpr, tnr) = roc_point(prob, 0.5);
        return Cutoff { c0: 0.5, tpr, tnr, distance: roc_distance((tpr, tnr)), degenerate: true };
    }
    let mut candidates: Vec<f64> = uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    candidates.extend([0.0, 1.0]);
    let mut best: Option<Cutoff> = None;
    for c in candidates {
        let (tpr, tnr) = roc_point(prob, c);
        let distance = roc_distance((tpr, tnr));
        if best.is_none_or(|b| distance < b.distance) {
            best = Some(Cutoff { c0: c, tpr, tnr, distance, degenerate: false });
        }
    }
    best.expect("at least two candidates")
}

/// Thresholded point estimate of a fitted chain.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub shape: TensorShape,
    pub k: usize,
    pub inclusion: Vec<f64>,
    pub cutoff: Cutoff,
    pub active: Vec<bool>,
    /// `beta_hat[t * K + j]`, zero outside the active set.
    pub beta_hat: Vec<f64>,
    pub mu_hat: f64,
    /// Response centering and scaling applied before fitting.
    pub y_mean: f64,
    pub y_sd: f64,
}

/// `beta_hat_i = mean_l alpha_i^(l) t(alpha_i^(l); lambda^(l))`, kept only where `P_i > c0`.
pub fn point_estimates(summary: &ChainSummary, inclusion: &[f64], c0: f64) -> (Vec<f64>, Vec<bool>) {
    let k = summary.basis_dim();
    let c = summary.count.max(1) as f64;
    let active: Vec<bool> = inclusion.iter().map(|&p| p > c0).collect();
    let beta = summary
        .sum_alpha_ind
        .chunks(k)
        .zip(&active)
        .flat_map(|(s, &on)| s.iter().map(move |v| if on { v / c } else { 0.0 }))
        .collect();
    (beta, active)
}

impl FitResult {
    /// Inclusion probabilities, ROC cutoff and point estimates from a chain summary.
    pub fn from_summary(summary: &ChainSummary, shape: &TensorShape, y_mean: f64, y_sd: f64) -> Result<Self> {
        if summary.count == 0 {
            return Err(FenError::InvalidParameter("chain retained no draws".into()));
        }
        let inclusion = inclusion_probability(summary);
        if inclusion.len() != shape.size() {
            return Err(FenError::DimensionMismatch("summary does not match the tensor shape".into()));
        }
        let cutoff = select_cutoff(&inclusion);
        let (beta_hat, active) = point_estimates(summary, &inclusion, cutoff.c0);
        Ok(Self {
            shape: shape.clone(),
            k: summary.basis_dim(),
            inclusion,
            cutoff,
            active,
            beta_hat,
            mu_hat: summary.sum_mu / summary.count as f64,
            y_mean,
            y_sd,
        })
    }

    pub fn beta(&self, t: usize) -> &[f64] {
        &self.beta_hat[t * self.k..(t + 1) * self.k]
    }

    /// `f_hat_t(x)` on the original response scale.
    pub fn component(&self, basis: &SplineBasis, t: usize, x: f64) -> f64 {
        self.y_sd * basis.eval_function(self.beta(t), x)
    }

    /// `||f_hat_t||_{L2}` on the original scale; the basis is orthonormal so this is `sd * ||beta_t||`.
    pub fn component_norm(&self, t: usize) -> f64 {
        self.y_sd * self.beta(t).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Predictions on the original response scale.
    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        data.predict(self.mu_hat, &self.beta_hat).into_iter().map(|v| self.y_mean + self.y_sd * v).collect()
    }
}

/// Evaluation metrics against a known truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub rmse: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub rpe: f64,
}

/// `sum (yhat - y)^2 / sum y^2`.
pub fn rpe(yhat: &[f64], y: &[f64]) -> f64 {
    let num: f64 = yhat.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = y.iter().map(|b| b * b).sum();
    num / den
}

/// True positive and true negative rates of an estimated active set.
pub fn tpr_tnr(truth: &[bool], est: &[bool]) -> (f64, f64) {
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &e) in truth.iter().zip(est) {
        if t {
            pos += 1;
            tp += e as usize;
        } else {
            neg += 1;
            tn += (!e) as usize;
        }
    }
    let rate = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    (rate(tp, pos), rate(tn, neg))
}

/// `int_0^1 f(x)^2 dx` with panels aligned to `breaks` (each split in four, 10 nodes per panel).
pub fn l2_norm_sq<F: Fn(f64) -> f64>(f: F, breaks: &[f64]) -> f64 {
    let rule = GaussRule::new(10);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let h = (w[1] - w[0]) / 4.0;
        for j in 0..4 {
            let a = w[0] + j as f64 * h;
            total += rule.integrate(a, a + h, |x| f(x).powi(2));
        }
    }
    total
}

/// MSE and relative MSE of estimated component functions.
///
/// `truth(t, x)` is the true component of entry `t` on the original response
/// scale. MSE averages `||f_t - f_hat_t||^2` over all entries; RMSE averages
/// `||f_t - f_hat_t||^2 / ||f_t||^2` over the truly active ones.
pub fn function_errors<F: Fn(usize, f64) -> f64>(
    truth: F,
    true_active: &[bool],
    fit: &FitResult,
    basis: &SplineBasis,
) -> (f64, f64) {
    let p = fit.shape.size();
    let breaks = basis.raw().breakpoints();
    let mut mse = 0.0;
    let (mut rel, mut n_active) = (0.0, 0usize);
    for t in 0..p {
        let zero_est = fit.beta(t).iter().all(|&v| v == 0.0);
        let err = if zero_est {
            l2_norm_sq(|x| truth(t, x), &breaks)
        } else {
            l2_norm_sq(|x| truth(t, x) - fit.component(basis, t, x), &breaks)
        };
        mse += err;
        if true_active[t] {
            let norm = l2_norm_sq(|x| truth(t, x), &breaks);
            if norm > 0.0 {
                rel += err / norm;
                n_active += 1;
            }
        }
    }
    let rmse = if n_active == 0 { 0.0 } else { rel / n_active as f64 };
    (mse / p as f64, rmse)
}

/// All metrics for a fit against a known truth and a held-out test set.
pub fn metrics<F: Fn(usize, f64) -> f64>(
    truth: F,
    true_active: &[bool],
    fit: &FitResult,
    basis: &SplineBasis,
    test: &Dataset,
) -> Metrics {
    let (mse, rmse) = function_errors(truth, true_active, fit, basis);
    let (tpr, tnr) = tpr_tnr(true_active, &fit.active);
    let rpe = rpe(&fit.predict(test), test.y());
    Metrics { mse, rmse, tpr, tnr, rpe }
}
