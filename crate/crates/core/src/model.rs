//! Hierarchical model: likelihood, functional FEN prior on the spline
//! coefficients, hyperpriors, and the gradient of the smoothed log-posterior
//! with respect to `(mu, alpha)`.
//!
//! Coefficients are stored row-major: `alpha[t * K + k]` is coefficient `k` of
//! vectorized tensor entry `t`.

use std::f64::consts::PI;

use crate::error::{FenError, Result};
use crate::grid::{IndexGraph, TensorShape};
use crate::spline::SplineBasis;

/// Covariate tensors with precomputed basis evaluations.
#[derive(Debug, Clone)]
pub struct Dataset {
    shape: TensorShape,
    n: usize,
    p: usize,
    k: usize,
    x: Vec<f64>,
    phi: Vec<f64>,
    phi_colsum: Vec<f64>,
    phi_sq_colsum: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    /// `x` holds `N` tensors one after another, each in column-major vectorized order.
    pub fn new(shape: TensorShape, x: Vec<f64>, y: Vec<f64>, basis: &SplineBasis) -> Result<Self> {
        let p = shape.size();
        let n = y.len();
        if x.len() != n * p {
            return Err(FenError::DimensionMismatch(format!(
                "{} covariate values for {n} responses of {p} entries",
                x.len()
            )));
        }
        if let Some(&v) = x.iter().find(|v| !(-1e-12..=1.0 + 1e-12).contains(*v)) {
            return Err(FenError::Domain(v));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(FenError::Numeric(format!("non-finite response {v}")));
        }
        let k = basis.dim();
        let mut phi = vec![0.0; n * p * k];
        for (xv, chunk) in x.iter().zip(phi.chunks_mut(k)) {
            basis.eval_into(xv.clamp(0.0, 1.0), chunk);
        }
        let mut phi_colsum = vec![0.0; p * k];
        let mut phi_sq_colsum = vec![0.0; p * k];
        for row in phi.chunks(p * k) {
            for ((acc, sq), v) in phi_colsum.iter_mut().zip(phi_sq_colsum.iter_mut()).zip(row) {
                *acc += v;
                *sq += v * v;
            }
        }
        Ok(Self { shape, n, p, k, x, phi, phi_colsum, phi_sq_colsum, y })
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn entries(&self) -> usize {
        self.p
    }

    pub fn basis_dim(&self) -> usize {
        self.k
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Covariate tensor of sample `n`, vectorized.
    pub fn x_row(&self, n: usize) -> &[f64] {
        &self.x[n * self.p..(n + 1) * self.p]
    }

    /// `phi(X^{(n)}_t)`.
    pub fn phi(&self, n: usize, t: usize) -> &[f64] {
        let start = (n * self.p + t) * self.k;
        &self.phi[start..start + self.k]
    }

    /// All basis evaluations of sample `n`, `p * K` values.
    pub fn phi_row(&self, n: usize) -> &[f64] {
        let len = self.p * self.k;
        &self.phi[n * len..(n + 1) * len]
    }

    /// `sum_n phi(X^{(n)}_t)`, row-major like `alpha`.
    /// `sum_n phi_k(X_nt)^2`, indexed `t * K + k`.
    pub fn phi_sq_colsum(&self) -> &[f64] {
        &self.phi_sq_colsum
    }

    pub fn phi_colsum(&self) -> &[f64] {
        &self.phi_colsum
    }

    /// Predictions `mu + sum_t phi(X_t)^T beta_t`.
    pub fn predict(&self, mu: f64, beta: &[f64]) -> Vec<f64> {
        (0..self.n).map(|n| mu + dot(self.phi_row(n), beta)).collect()
    }
}

/// Sample mean and standard deviation (denominator `N - 1`), with the standardized values.
pub fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    (y.iter().map(|v| (v - mean) / sd).collect(), mean, sd)
}

/// Sampled parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub mu: f64,
    pub alpha: Vec<f64>,
    pub sigma2: f64,
    pub delta: f64,
    pub lambda: f64,
}

/// How the activity indicator `t(alpha_i; lambda)` enters the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorMode {
    /// Arctan surrogate.
    Smooth,
    /// Indicator fixed at 1 (no thresholding).
    One,
}

/// Covariance shape of the Langevin proposal for `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaProposal {
    /// `tau^2 I`.
    Isotropic,
    /// `tau^2 diag(m)` with `1/m` the diagonal curvature of the Gaussian part of
    /// the target at the current `(delta, sigma2)`.
    Curvature,
}

/// Fixed and tuned scalars of the model plus sampler step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub r: f64,
    pub rho: f64,
    pub p0: f64,
    pub p1: f64,
    pub delta_prime: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub sigma2_mu: f64,
    pub gig_p: f64,
    pub gig_a: f64,
    pub gig_b: f64,
    pub lambda_u: f64,
    pub tau_mu: f64,
    pub tau_alpha: f64,
    pub tau_lambda: f64,
    pub indicator: IndicatorMode,
    pub alpha_proposal: AlphaProposal,
}

pub const DEFAULT_DELTA_PRIME: f64 = 1e-4;
pub const DEFAULT_EPS1: f64 = 1e-6;
pub const DEFAULT_SIGMA2_MU: f64 = 100.0;

impl HyperParams {
    /// Defaults for a tensor of `entries` cells and basis dimension `k`:
    /// `p1 = (2 * entries - 1) K / 2`, `p0 = entries * K`.
    pub fn new(entries: usize, k: usize) -> Self {
        Self {
            r: 1.0,
            rho: 1.0,
            p0: (entries * k) as f64,
            p1: default_p1(entries, k),
            delta_prime: DEFAULT_DELTA_PRIME,
            eps0: 1e-3,
            eps1: DEFAULT_EPS1,
            sigma2_mu: DEFAULT_SIGMA2_MU,
            gig_p: 1.0,
            gig_a: 0.5,
            gig_b: 0.5,
            lambda_u: 1.0,
            tau_mu: 0.1,
            tau_alpha: 0.01,
            tau_lambda: 0.1,
            indicator: IndicatorMode::Smooth,
            alpha_proposal: AlphaProposal::Curvature,
        }
    }
}

pub fn default_p1(entries: usize, k: usize) -> f64 {
    (2.0 * entries as f64 - 1.0) * k as f64 / 2.0
}

/// `1/2 + arctan((||alpha_i||^2 - lambda) / eps0) / pi`.
pub fn smooth_indicator(alpha_i: &[f64], lambda: f64, eps0: f64) -> f64 {
    indicator_from_norm(norm_sq(alpha_i), lambda, eps0)
}

pub fn indicator_from_norm(norm_sq: f64, lambda: f64, eps0: f64) -> f64 {
    0.5 + ((norm_sq - lambda) / eps0).atan() / PI
}

/// Scalar `c` with `d t(alpha_i; lambda) / d alpha_i = c * alpha_i`.
pub fn indicator_slope(norm_sq: f64, lambda: f64, eps0: f64) -> f64 {
    let z = norm_sq - lambda;
    2.0 / PI * eps0 / (eps0 * eps0 + z * z)
}

/// `sum_{(i,i') in E} sqrt(||alpha_i - alpha_i'||^2 + eps1)`.
pub fn smooth_fusion(alpha: &[f64], k: usize, graph: &IndexGraph, eps1: f64) -> f64 {
    graph
        .edges()
        .iter()
        .map(|&(a, b)| (diff_norm_sq(&alpha[a * k..(a + 1) * k], &alpha[b * k..(b + 1) * k]) + eps1).sqrt())
        .sum()
}

/// `sum_{(i,i') in E} ||alpha_i - alpha_i'||`.
pub fn exact_fusion(alpha: &[f64], k: usize, graph: &IndexGraph) -> f64 {
    smooth_fusion(alpha, k, graph, 0.0)
}

/// `sum_{(i,i') in E} ||alpha_i - alpha_i'||^2`.
pub fn laplacian_form(alpha: &[f64], k: usize, graph: &IndexGraph) -> f64 {
    graph
        .edges()
        .iter()
        .map(|&(a, b)| diff_norm_sq(&alpha[a * k..(a + 1) * k], &alpha[b * k..(b + 1) * k]))
        .sum()
}

/// `sum_i alpha_i^T R alpha_i`.
pub fn roughness_form(alpha: &[f64], basis: &SplineBasis) -> f64 {
    let k = basis.dim();
    let r = basis.roughness();
    alpha
        .chunks(k)
        .map(|a| {
            let mut s = 0.0;
            for i in 0..k {
                for j in 0..k {
                    s += a[i] * r[(i, j)] * a[j];
                }
            }
            s
        })
        .sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn diff_norm_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Prior pieces that depend on `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorTerms {
    /// `sum_i alpha_i^T R alpha_i`.
    pub roughness: f64,
    /// `sum_E ||alpha_i - alpha_i'||^2`.
    pub laplacian: f64,
    /// `sum_E sqrt(||alpha_i - alpha_i'||^2 + eps1)`.
    pub fusion: f64,
}

impl PriorTerms {
    /// `r * laplacian + (1 - r) * fusion`.
    pub fn penalty(&self, r: f64) -> f64 {
        r * self.laplacian + (1.0 - r) * self.fusion
    }
}

/// Cached quantities of one evaluation of the likelihood at `(mu, alpha, lambda)`.
#[derive(Debug, Clone)]
pub struct Fitted {
    /// `||alpha_t||^2`.
    pub norms: Vec<f64>,
    /// Indicator values `t(alpha_t; lambda)`.
    pub ind: Vec<f64>,
    /// `g[n * p + t] = phi(X^{(n)}_t)^T alpha_t`.
    pub g: Vec<f64>,
    /// `sum_n g[n * p + t]`.
    pub sum_g: Vec<f64>,
    /// Residuals `y_n - yhat_n`.
    pub resid: Vec<f64>,
    pub rss: f64,
    /// `sum_n e_n phi(X^{(n)}_t)`, row-major like `alpha`.
    pub sum_e_phi: Vec<f64>,
    /// `sum_n e_n g[n * p + t]`.
    pub sum_e_g: Vec<f64>,
    /// Whether `sum_e_phi` and `sum_e_g` match the current residuals.
    pub sums_valid: bool,
}

impl Fitted {
    /// Shift `mu` by `shift`, updating residuals and the residual sums.
    pub fn shift_mu(&mut self, shift: f64, data: &Dataset) {
        for e in &mut self.resid {
            *e -= shift;
        }
        self.rss = self.resid.iter().map(|e| e * e).sum();
        if self.sums_valid {
            for (s, c) in self.sum_e_phi.iter_mut().zip(data.phi_colsum()) {
                *s -= shift * c;
            }
            for (s, c) in self.sum_e_g.iter_mut().zip(&self.sum_g) {
                *s -= shift * c;
            }
        }
    }
}

/// Model bound to a dataset, graph, basis and hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct Model<'a> {
    pub data: &'a Dataset,
    pub graph: &'a IndexGraph,
    pub basis: &'a SplineBasis,
    pub hp: &'a HyperParams,
}

impl<'a> Model<'a> {
    pub fn new(
        data: &'a Dataset,
        graph: &'a IndexGraph,
        basis: &'a SplineBasis,
        hp: &'a HyperParams,
    ) -> Result<Self> {
        if data.entries() != graph.node_count() {
            return Err(FenError::DimensionMismatch(format!(
                "dataset has {} entries, graph has {} nodes",
                data.entries(),
                graph.node_count()
            )));
        }
        if data.basis_dim() != basis.dim() {
            return Err(FenError::DimensionMismatch("dataset was built with another basis".into()));
        }
        Ok(Self { data, graph, basis, hp })
    }

    /// Same model with other hyperparameters.
    pub fn with_hp<'b>(&self, hp: &'b HyperParams) -> Model<'b>
    where
        'a: 'b,
    {
        Model { data: self.data, graph: self.graph, basis: self.basis, hp }
    }

    pub fn k(&self) -> usize {
        self.basis.dim()
    }

    pub fn p(&self) -> usize {
        self.graph.node_count()
    }

    pub fn indicator_value(&self, norm_sq: f64, lambda: f64) -> f64 {
        match self.hp.indicator {
            IndicatorMode::Smooth => indicator_from_norm(norm_sq, lambda, self.hp.eps0),
            IndicatorMode::One => 1.0,
        }
    }

    fn indicator_deriv(&self, norm_sq: f64, lambda: f64) -> f64 {
        match self.hp.indicator {
            IndicatorMode::Smooth => indicator_slope(norm_sq, lambda, self.hp.eps0),
            IndicatorMode::One => 0.0,
        }
    }

    /// Evaluate the mean structure at `(mu, alpha, lambda)` together with the
    /// residual sums needed by the gradient, in one pass over the data.
    pub fn fit(&self, mu: f64, alpha: &[f64], lambda: f64) -> Fitted {
        let (p, k, n) = (self.p(), self.k(), self.data.len());
        let norms: Vec<f64> = alpha.chunks(k).map(norm_sq).collect();
        let ind: Vec<f64> = norms.iter().map(|&s| self.indicator_value(s, lambda)).collect();
        let mut g = vec![0.0; n * p];
        let mut sum_g = vec![0.0; p];
        let mut resid = vec![0.0; n];
        let mut sum_e_phi = vec![0.0; p * k];
        let mut sum_e_g = vec![0.0; p];
        for i in 0..n {
            let phi = self.data.phi_row(i);
            let gi = &mut g[i * p..(i + 1) * p];
            let mut yhat = mu;
            for t in 0..p {
                let v = dot(&phi[t * k..(t + 1) * k], &alpha[t * k..(t + 1) * k]);
                gi[t] = v;
                yhat += v * ind[t];
            }
            let e = self.data.y()[i] - yhat;
            resid[i] = e;
            for (acc, &v) in sum_e_phi.iter_mut().zip(phi) {
                *acc += e * v;
            }
            for t in 0..p {
                sum_e_g[t] += e * gi[t];
                sum_g[t] += gi[t];
            }
        }
        let rss = resid.iter().map(|e| e * e).sum();
        Fitted { norms, ind, g, sum_g, resid, rss, sum_e_phi, sum_e_g, sums_valid: true }
    }

    /// Indicator values, residuals and RSS for a new threshold, reusing the cached `g`.
    pub fn residuals_for_lambda(&self, fitted: &Fitted, mu: f64, lambda: f64) -> (Vec<f64>, Vec<f64>, f64) {
        let (p, n) = (self.p(), self.data.len());
        let ind: Vec<f64> = fitted.norms.iter().map(|&s| self.indicator_value(s, lambda)).collect();
        let resid: Vec<f64> = (0..n)
            .map(|i| self.data.y()[i] - mu - dot(&fitted.g[i * p..(i + 1) * p], &ind))
            .collect();
        let rss = resid.iter().map(|e| e * e).sum();
        (ind, resid, rss)
    }

    /// Recompute `sum_e_phi` and `sum_e_g` from the cached residuals.
    pub fn refresh_sums(&self, fitted: &mut Fitted) {
        if fitted.sums_valid {
            return;
        }
        let (p, n) = (self.p(), self.data.len());
        fitted.sum_e_phi.iter_mut().for_each(|v| *v = 0.0);
        fitted.sum_e_g.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let e = fitted.resid[i];
            for (acc, &v) in fitted.sum_e_phi.iter_mut().zip(self.data.phi_row(i)) {
                *acc += e * v;
            }
            for (acc, &v) in fitted.sum_e_g.iter_mut().zip(&fitted.g[i * p..(i + 1) * p]) {
                *acc += e * v;
            }
        }
        fitted.sums_valid = true;
    }

/// Gaussian log-likelihood from a residual sum of squares.
    pub fn loglik_from_rss(&self, rss: f64, sigma2: f64) -> f64 {
        let n = self.data.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        -0.5 * n * (2.0 * PI * sigma2).ln() - rss / (2.0 * sigma2)
    }

    pub fn log_likelihood(&self, state: &ModelState) -> f64 {
        let f = self.fit(state.mu, &state.alpha, state.lambda);
        self.loglik_from_rss(f.rss, state.sigma2)
    }

    pub fn prior_terms(&self, alpha: &[f64]) -> PriorTerms {
        let k = self.k();
        PriorTerms {
            roughness: roughness_form(alpha, self.basis),
            laplacian: laplacian_form(alpha, k, self.graph),
            fusion: smooth_fusion(alpha, k, self.graph, self.hp.eps1),
        }
    }

    /// Log prior of `alpha` given `(delta, sigma2)`, up to the normalizing constant.
    pub fn log_prior_alpha_terms(&self, terms: &PriorTerms, delta: f64, sigma2: f64) -> f64 {
        -delta * terms.roughness / sigma2 - terms.penalty(self.hp.r) / (2.0 * sigma2 * self.hp.rho)
    }

    pub fn log_prior_alpha(&self, state: &ModelState) -> f64 {
        let terms = self.prior_terms(&state.alpha);
        self.log_prior_alpha_terms(&terms, state.delta, state.sigma2)
    }

    /// Log priors of `mu`, `lambda`, `delta` and `sigma2` up to constants.
    pub fn log_prior_rest(&self, state: &ModelState) -> f64 {
        log_prior_mu(state.mu, self.hp)
            + log_prior_lambda(state.lambda, self.hp)
            + log_prior_delta(state.delta, self.hp)
            + log_prior_sigma2(state.sigma2, self.hp)
    }

    /// Smoothed log-posterior up to an additive constant.
    pub fn log_posterior(&self, state: &ModelState) -> f64 {
        self.log_likelihood(state) + self.log_prior_alpha(state) + self.log_prior_rest(state)
    }

    /// Gradient of the log-posterior in `mu` given cached residuals.
    pub fn grad_mu_from(&self, fitted: &Fitted, mu: f64, sigma2: f64) -> f64 {
        fitted.resid.iter().sum::<f64>() / sigma2 - mu / self.hp.sigma2_mu
    }

    /// Gradient of the log-posterior in `alpha` given a fit with valid residual sums.
    pub fn grad_alpha_from(&self, fitted: &Fitted, alpha: &[f64], state: &ModelState) -> Vec<f64> {
        assert!(fitted.sums_valid, "residual sums are stale");
        let (p, k) = (self.p(), self.k());
        let sigma2 = state.sigma2;
        // Likelihood part: sum_n e_n (ind_t phi_nt + g_nt c_t alpha_t) / sigma2.
        let mut grad = vec![0.0; p * k];
        for t in 0..p {
            let c = self.indicator_deriv(fitted.norms[t], state.lambda);
            for j in 0..k {
                let idx = t * k + j;
                grad[idx] = (fitted.ind[t] * fitted.sum_e_phi[idx] + c * alpha[idx] * fitted.sum_e_g[t]) / sigma2;
            }
        }
        self.add_prior_alpha_grad(alpha, state.delta, sigma2, &mut grad);
        grad
    }

    /// Add the gradient of the log prior of `alpha` into `grad`.
    pub fn add_prior_alpha_grad(&self, alpha: &[f64], delta: f64, sigma2: f64, grad: &mut [f64]) {
        let k = self.k();
        let r = self.basis.roughness();
        let rough = 2.0 * delta / sigma2;
        for (a, gr) in alpha.chunks(k).zip(grad.chunks_mut(k)) {
            for i in 0..k {
                let ra: f64 = (0..k).map(|j| r[(i, j)] * a[j]).sum();
                gr[i] -= rough * ra;
            }
        }
        let scale = 1.0 / (2.0 * sigma2 * self.hp.rho);
        let (rr, eps1) = (self.hp.r, self.hp.eps1);
        for &(a, b) in self.graph.edges() {
            let (ia, ib) = (a * k, b * k);
            let d2: f64 = (0..k).map(|j| (alpha[ia + j] - alpha[ib + j]).powi(2)).sum();
            let w = scale * (2.0 * rr + (1.0 - rr) / (d2 + eps1).sqrt());
            for j in 0..k {
                let diff = alpha[ia + j] - alpha[ib + j];
                grad[ia + j] -= w * diff;
                grad[ib + j] += w * diff;
            }
        }
    }

    /// Diagonal proposal mass for `alpha` given `(delta, sigma2)`, or `None` for the isotropic proposal.
    /// `1/m_tk = (sum_n phi_k(X_nt)^2 + 2 delta R_kk + r deg(t) / rho) / sigma2`.
    pub fn alpha_mass(&self, delta: f64, sigma2: f64) -> Option<Vec<f64>> {
        if self.hp.alpha_proposal == AlphaProposal::Isotropic {
            return None;
        }
        let k = self.k();
        let r = self.basis.roughness();
        let c = self.data.phi_sq_colsum();
        let mut m = Vec::with_capacity(c.len());
        for t in 0..self.p() {
            let lap = self.hp.r * self.graph.degree(t) as f64 / self.hp.rho;
            for j in 0..k {
                let h = (c[t * k + j] + 2.0 * delta * r[(j, j)] + lap) / sigma2;
                m.push(if h > 0.0 && h.is_finite() { 1.0 / h } else { 1.0 });
            }
        }
        Some(m)
    }

    /// Exact gradient of the smoothed log-posterior in `(mu, alpha)`.
    pub fn grad_mu_alpha(&self, state: &ModelState) -> Result<(f64, Vec<f64>)> {
        let fitted = self.fit(state.mu, &state.alpha, state.lambda);
        let gmu = self.grad_mu_from(&fitted, state.mu, state.sigma2);
        let galpha = self.grad_alpha_from(&fitted, &state.alpha, state);
        if !gmu.is_finite() || galpha.iter().any(|v| !v.is_finite()) {
            return Err(FenError::Numeric("non-finite gradient".into()));
        }
        Ok((gmu, galpha))
    }
}

pub fn log_prior_mu(mu: f64, hp: &HyperParams) -> f64 {
    -mu * mu / (2.0 * hp.sigma2_mu)
}

/// GIG log density up to constants; `-inf` for `lambda <= 0`.
pub fn log_prior_lambda(lambda: f64, hp: &HyperParams) -> f64 {
    if !(lambda > 0.0) {
        return f64::NEG_INFINITY;
    }
    (hp.gig_p - 1.0) * lambda.ln() - 0.5 * (hp.gig_a / lambda + hp.gig_b * lambda)
}

pub fn log_prior_delta(delta: f64, hp: &HyperParams) -> f64 {
    if !(delta > 0.0) {
        return f64::NEG_INFINITY;
    }
    (hp.p0 - 1.0) * delta.ln() - delta
}

pub fn log_prior_sigma2(sigma2: f64, hp: &HyperParams) -> f64 {
    if !(sigma2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    -(hp.p1 + 1.0) * sigma2.ln() - 1.0 / sigma2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_values() {
        assert_eq!(smooth_indicator(&[1.0, 0.0], 1.0, 0.1), 0.5);
        let v = smooth_indicator(&[(1.1f64).sqrt()], 1.0, 0.1);
        assert!((v - 0.75).abs() < 1e-12);
        let mut prev = 0.0;
        for eps in [1.0, 0.1, 0.01, 1e-4] {
            let v = smooth_indicator(&[1.2], 1.0, eps);
            assert!(v > prev && v < 1.0);
            prev = v;
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn lambda_prior_at_defaults() {
        let hp = HyperParams::new(4, 3);
        for lam in [0.1, 1.0, 3.7] {
            let want = -(0.25 / lam + 0.25 * lam);
            assert!((log_prior_lambda(lam, &hp) - want).abs() < 1e-14);
        }
        assert_eq!(log_prior_lambda(0.0, &hp), f64::NEG_INFINITY);
        assert_eq!(log_prior_lambda(-1.0, &hp), f64::NEG_INFINITY);
    }

    #[test]
    fn delta_prior_mode() {
        let mut hp = HyperParams::new(4, 3);
        hp.p0 = 7.0;
        let at = |d: f64| log_prior_delta(d, &hp);
        assert!(at(6.0) > at(5.9) && at(6.0) > at(6.1));
        assert!(log_prior_mu(0.0, &hp) > log_prior_mu(0.1, &hp));
        assert!(log_prior_mu(0.0, &hp) > log_prior_mu(-0.1, &hp));
    }

    #[test]
    fn p1_rule() {
        assert_eq!(default_p1(4, 3), 10.5);
        assert_eq!(HyperParams::new(225, 4).p1, 898.0);
    }

    #[test]
    fn standardize_moments() {
        let (z, m, s) = standardize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(z.iter().sum::<f64>().abs() < 1e-15);
    }
}
