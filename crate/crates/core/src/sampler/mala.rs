//! Metropolis-adjusted Langevin kernel and Robbins–Monro step-size adaptation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// Current point of a MALA chain with its log density, gradient and any
/// auxiliary cache the target produced alongside them.
#[derive(Debug, Clone)]
pub struct MalaPoint<A> {
    pub x: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
    pub aux: A,
}

/// Mean of the Langevin proposal, `x + (tau^2 / 2) grad`.
pub fn mala_proposal_mean(x: &[f64], grad: &[f64], tau: f64) -> Vec<f64> {
    let h = 0.5 * tau * tau;
    x.iter().zip(grad).map(|(a, g)| a + h * g).collect()
}

/// Log density of proposing `to` from `from`: `N(to; from + (tau^2/2) grad_from, tau^2 I)`.
pub fn mala_log_proposal_density(to: &[f64], from: &[f64], grad_from: &[f64], tau: f64) -> f64 {
    mala_log_proposal_density_scaled(to, from, grad_from, tau, None)
}

/// Proposal density with a diagonal mass `m`: `N(to; from + (tau^2/2) m grad_from, tau^2 diag(m))`.
pub fn mala_log_proposal_density_scaled(to: &[f64], from: &[f64], grad_from: &[f64], tau: f64, m: Option<&[f64]>) -> f64 {
    let Some(m) = m else {
        return isotropic_density(to, from, grad_from, tau);
    };
    let h = 0.5 * tau * tau;
    let tau2 = tau * tau;
    let mut v = 0.0;
    for (((t, f), g), mi) in to.iter().zip(from).zip(grad_from).zip(m) {
        let d = t - f - h * mi * g;
        v -= d * d / (2.0 * tau2 * mi) + 0.5 * (2.0 * PI * tau2 * mi).ln();
    }
    v
}

fn isotropic_density(to: &[f64], from: &[f64], grad_from: &[f64], tau: f64) -> f64 {
    let h = 0.5 * tau * tau;
    let tau2 = tau * tau;
    let ss: f64 = to
        .iter()
        .zip(from)
        .zip(grad_from)
        .map(|((t, f), g)| {
            let d = t - f - h * g;
            d * d
        })
        .sum();
    -ss / (2.0 * tau2) - 0.5 * to.len() as f64 * (2.0 * PI * tau2).ln()
}

/// Outcome of one MH step: whether it moved and the acceptance probability used for adaptation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub accept_prob: f64,
}

/// Log MH ratio of a Langevin move from `cur` to `prop`.
pub fn mala_log_ratio<A, B>(cur: &MalaPoint<A>, prop: &MalaPoint<B>, tau: f64) -> f64 {
    mala_log_ratio_scaled(cur, prop, tau, None)
}

/// Log MH ratio under a fixed diagonal mass `m`.
pub fn mala_log_ratio_scaled<A, B>(cur: &MalaPoint<A>, prop: &MalaPoint<B>, tau: f64, m: Option<&[f64]>) -> f64 {
    prop.logp - cur.logp + mala_log_proposal_density_scaled(&cur.x, &prop.x, &prop.grad, tau, m)
        - mala_log_proposal_density_scaled(&prop.x, &cur.x, &cur.grad, tau, m)
}

/// One MALA transition. `target` returns `None` (or non-finite values) for
/// points outside the support, which are rejected.
pub fn mala_step<A, R, F>(current: &mut MalaPoint<A>, tau: f64, rng: &mut R, target: F) -> StepOutcome
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Option<MalaPoint<A>>,
{
    mala_step_scaled(current, tau, None, rng, target)
}

/// MALA transition preconditioned by a fixed diagonal mass `m` (per-coordinate variance multipliers).
pub fn mala_step_scaled<A, R, F>(
    current: &mut MalaPoint<A>,
    tau: f64,
    m: Option<&[f64]>,
    rng: &mut R,
    mut target: F,
) -> StepOutcome
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Option<MalaPoint<A>>,
{
    let h = 0.5 * tau * tau;
    let mut x = current.x.clone();
    for (i, v) in x.iter_mut().enumerate() {
        let mi = m.map_or(1.0, |m| m[i]);
        let z: f64 = StandardNormal.sample(rng);
        *v += h * mi * current.grad[i] + tau * mi.sqrt() * z;
    }
    let u: f64 = rng.random();
    let rejected = StepOutcome { accepted: false, accept_prob: 0.0 };
    if x.iter().any(|v| !v.is_finite()) {
        return rejected;
    }
    let Some(prop) = target(&x) else {
        return rejected;
    };
    if !prop.logp.is_finite() || prop.grad.iter().any(|g| !g.is_finite()) {
        return rejected;
    }
    let log_ratio = mala_log_ratio_scaled(current, &prop, tau, m);
    if !log_ratio.is_finite() && log_ratio != f64::INFINITY {
        return rejected;
    }
    let accept_prob = log_ratio.min(0.0).exp();
    if u.ln() < log_ratio {
        *current = prop;
        StepOutcome { accepted: true, accept_prob }
    } else {
        StepOutcome { accepted: false, accept_prob }
    }
}

/// Robbins–Monro adaptation on the log scale: `tau <- tau * exp(t^-0.6 (a - target))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAdapter {
    pub target: f64,
}

pub const MALA_TARGET: f64 = 0.574;
pub const MH_TARGET: f64 = 0.44;

impl StepAdapter {
    pub fn new(target: f64) -> Self {
        Self { target }
    }

    /// Updated step size after iteration `t` (1-based) with acceptance probability `accept_prob`.
    pub fn adapt(&self, tau: f64, t: usize, accept_prob: f64) -> f64 {
        let gain = (t.max(1) as f64).powf(-0.6);
        (tau * (gain * (accept_prob - self.target)).exp()).clamp(1e-12, 1e6)
    }
}
