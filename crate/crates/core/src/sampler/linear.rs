//! Scalar fused elastic net for linear regression on tensor covariates:
//! `y = sum_i X_i beta_i + eps`, with prior
//! `exp(-delta sum beta_i^2 - r1 sum_E |beta_i - beta_i'| - r2 sum_E (beta_i - beta_i')^2)`
//! and `|x|` smoothed to `sqrt(x^2 + eps1)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mala::{mala_step, MalaPoint, StepAdapter};
use super::{BlockRate, ChainConfig};
use crate::error::{FenError, Result};
use crate::grid::IndexGraph;

/// Prior weights of the scalar fused elastic net.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFenPrior {
    pub delta: f64,
    pub r1: f64,
    pub r2: f64,
    pub eps1: f64,
}

impl LinearFenPrior {
    /// `r1 = r / rho`, `r2 = (1 - r) / rho`: `r = 1` is the pure fusion prior, `r = 0` the Laplacian prior.
    pub fn from_mix(r: f64, rho: f64, delta: f64, eps1: f64) -> Self {
        Self { delta, r1: r / rho, r2: (1.0 - r) / rho, eps1 }
    }

    /// Log prior density up to a constant.
    pub fn log_density(&self, beta: &[f64], graph: &IndexGraph) -> f64 {
        let mut v = -self.delta * beta.iter().map(|b| b * b).sum::<f64>();
        for &(a, b) in graph.edges() {
            let d = beta[a] - beta[b];
            v -= self.r1 * (d * d + self.eps1).sqrt() + self.r2 * d * d;
        }
        v
    }

    /// Add the prior gradient into `grad`.
    pub fn add_grad(&self, beta: &[f64], graph: &IndexGraph, grad: &mut [f64]) {
        for (g, b) in grad.iter_mut().zip(beta) {
            *g -= 2.0 * self.delta * b;
        }
        for &(a, b) in graph.edges() {
            let d = beta[a] - beta[b];
            let w = self.r1 / (d * d + self.eps1).sqrt() + 2.0 * self.r2;
            grad[a] -= w * d;
            grad[b] += w * d;
        }
    }
}

/// Posterior summary of a scalar-FEN chain.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub beta_hat: Vec<f64>,
    pub draws: Vec<Vec<f64>>,
    pub acceptance: BlockRate,
    pub tau: f64,
}

/// MALA chain over `beta` for `y ~ N(X beta, sigma2 I)`. `x` is `N x p` row-major.
pub fn fit_linear_fen(
    x: &[f64],
    y: &[f64],
    graph: &IndexGraph,
    prior: &LinearFenPrior,
    sigma2: f64,
    cfg: &ChainConfig,
) -> Result<LinearFit> {
    cfg.validate()?;
    let p = graph.node_count();
    let n = y.len();
    if x.len() != n * p {
        return Err(FenError::DimensionMismatch(format!("design has {} values, expected {}", x.len(), n * p)));
    }
    let target = |beta: &[f64]| -> Option<MalaPoint<()>> {
        let mut grad = vec![0.0; p];
        let mut ll = 0.0;
        for (row, &yn) in x.chunks(p).zip(y) {
            let e = yn - row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            ll -= e * e / (2.0 * sigma2);
            for (g, a) in grad.iter_mut().zip(row) {
                *g += e * a / sigma2;
            }
        }
        prior.add_grad(beta, graph, &mut grad);
        let logp = ll + prior.log_density(beta, graph);
        logp.is_finite().then(|| MalaPoint { x: beta.to_vec(), logp, grad, aux: () })
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cur = target(&vec![0.0; p]).ok_or_else(|| FenError::Numeric("non-finite start".into()))?;
    let adapter = StepAdapter::new(cfg.target_accept_mala);
    let mut tau = 0.1 / (p as f64).powf(1.0 / 6.0);
    let mut sum = vec![0.0; p];
    let mut count = 0usize;
    let mut draws = Vec::new();
    let mut acceptance = BlockRate::default();
    for it in 1..=cfg.total_iters {
        let o = mala_step(&mut cur, tau, &mut rng, target);
        if it <= cfg.burn_in {
            tau = adapter.adapt(tau, it, o.accept_prob);
            continue;
        }
        acceptance.attempts += 1;
        acceptance.accepted += o.accepted as usize;
        if (it - cfg.burn_in).is_multiple_of(cfg.thinning) {
            for (s, b) in sum.iter_mut().zip(&cur.x) {
                *s += b;
            }
            count += 1;
            if cfg.store_draws {
                draws.push(cur.x.clone());
            }
        }
    }
    let beta_hat = sum.iter().map(|s| s / count.max(1) as f64).collect();
    Ok(LinearFit { beta_hat, draws, acceptance, tau })
}
