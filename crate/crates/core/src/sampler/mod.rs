//! Hybrid posterior sampler: Langevin updates for `mu` and `alpha`, exact
//! Gibbs draws for `sigma2` and `delta`, and a truncated-normal
//! Metropolis–Hastings update for the threshold `lambda`.

pub mod linear;
pub mod mala;
pub mod truncnorm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{FenError, Result};
use crate::model::{indicator_from_norm, log_prior_lambda, Fitted, Model, ModelState, PriorTerms};
use mala::{mala_step, mala_step_scaled, MalaPoint, StepAdapter, StepOutcome};
use truncnorm::TruncatedNormal;

/// Consecutive all-reject sweeps after which a chain is flagged as diverged.
pub const DIVERGENCE_SWEEPS: usize = 500;

/// Which blocks are updated in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateMask {
    pub mu: bool,
    pub alpha: bool,
    pub sigma2: bool,
    pub delta: bool,
    pub lambda: bool,
}

impl UpdateMask {
    pub const ALL: Self = Self { mu: true, alpha: true, sigma2: true, delta: true, lambda: true };
}

/// Chain length, burn-in, warm-start offset and adaptation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub total_iters: usize,
    pub burn_in: usize,
    pub warmstart_offset: usize,
    pub thinning: usize,
    pub seed: u64,
    pub target_accept_mala: f64,
    pub target_accept_mh: f64,
    pub updates: UpdateMask,
    /// Keep every retained draw in memory, not only the running summary.
    pub store_draws: bool,
}

impl ChainConfig {
    /// `I` iterations with `B = I / 2` and `W = I / 10`.
    pub fn new(total_iters: usize, seed: u64) -> Self {
        Self {
            total_iters,
            burn_in: total_iters / 2,
            warmstart_offset: total_iters / 10,
            thinning: 1,
            seed,
            target_accept_mala: mala::MALA_TARGET,
            target_accept_mh: mala::MH_TARGET,
            updates: UpdateMask::ALL,
            store_draws: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmstart_offset < self.burn_in && self.burn_in < self.total_iters) {
            return Err(FenError::InvalidParameter(format!(
                "need W < B < I, got W={} B={} I={}",
                self.warmstart_offset, self.burn_in, self.total_iters
            )));
        }
        if self.thinning == 0 {
            return Err(FenError::InvalidParameter("thinning must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of retained draws, `(I - B) / thinning`.
    pub fn retained(&self) -> usize {
        (self.total_iters - self.burn_in) / self.thinning
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::new(20_000, 0)
    }
}

/// Current chain state with the cached fit and prior terms.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub state: ModelState,
    pub fitted: Fitted,
    pub terms: PriorTerms,
}

impl ChainState {
    pub fn new(model: &Model, state: ModelState) -> Result<Self> {
        if state.alpha.len() != model.p() * model.k() {
            return Err(FenError::DimensionMismatch(format!(
                "alpha has {} values, expected {}",
                state.alpha.len(),
                model.p() * model.k()
            )));
        }
        let fitted = model.fit(state.mu, &state.alpha, state.lambda);
        let terms = model.prior_terms(&state.alpha);
        Ok(Self { state, fitted, terms })
    }

    fn alpha_log_target(&self, model: &Model) -> f64 {
        model.loglik_from_rss(self.fitted.rss, self.state.sigma2)
            + model.log_prior_alpha_terms(&self.terms, self.state.delta, self.state.sigma2)
    }
}

/// Initial state: `mu = ybar`, `alpha ~ N(0, 0.01^2)`, `sigma2 = 1`, `delta = p0`, `lambda = lambda_u / 2`.
pub fn initial_state<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> ModelState {
    let y = model.data.y();
    let mu = if y.is_empty() { 0.0 } else { y.iter().sum::<f64>() / y.len() as f64 };
    let normal = Normal::new(0.0, 0.01).expect("valid normal");
    ModelState {
        mu,
        alpha: (0..model.p() * model.k()).map(|_| normal.sample(rng)).collect(),
        sigma2: 1.0,
        delta: model.hp.p0,
        lambda: model.hp.lambda_u / 2.0,
    }
}

/// Langevin update of `mu`.
pub fn mala_step_mu<R: Rng + ?Sized>(model: &Model, cs: &mut ChainState, tau: f64, rng: &mut R) -> StepOutcome {
    let sigma2 = cs.state.sigma2;
    let s2mu = model.hp.sigma2_mu;
    let n = model.data.len() as f64;
    let mu0 = cs.state.mu;
    let sum_e: f64 = cs.fitted.resid.iter().sum();
    let rss0 = cs.fitted.rss;
    let point = |mu: f64| {
        let d = mu - mu0;
        let rss = rss0 - 2.0 * d * sum_e + n * d * d;
        MalaPoint {
            x: vec![mu],
            logp: -rss / (2.0 * sigma2) - mu * mu / (2.0 * s2mu),
            grad: vec![(sum_e - n * d) / sigma2 - mu / s2mu],
            aux: (),
        }
    };
    let mut cur = point(mu0);
    let out = mala_step(&mut cur, tau, rng, |x| Some(point(x[0])));
    if out.accepted {
        cs.state.mu = cur.x[0];
        cs.fitted.shift_mu(cur.x[0] - mu0, model.data);
    }
    out
}

/// Langevin update of the whole coefficient block with one shared step size
/// (optionally preconditioned, see [`Model::alpha_mass`]).
pub fn mala_step_alpha<R: Rng + ?Sized>(model: &Model, cs: &mut ChainState, tau: f64, rng: &mut R) -> StepOutcome {
    model.refresh_sums(&mut cs.fitted);
    let mut cur: MalaPoint<Option<(Fitted, PriorTerms)>> = MalaPoint {
        x: cs.state.alpha.clone(),
        logp: cs.alpha_log_target(model),
        grad: model.grad_alpha_from(&cs.fitted, &cs.state.alpha, &cs.state),
        aux: None,
    };
    let state = &cs.state;
    let mass = model.alpha_mass(state.delta, state.sigma2);
    let out = mala_step_scaled(&mut cur, tau, mass.as_deref(), rng, |alpha| {
        let fitted = model.fit(state.mu, alpha, state.lambda);
        let terms = model.prior_terms(alpha);
        let logp = model.loglik_from_rss(fitted.rss, state.sigma2)
            + model.log_prior_alpha_terms(&terms, state.delta, state.sigma2);
        if !logp.is_finite() {
            return None;
        }
        let grad = model.grad_alpha_from(&fitted, alpha, state);
        Some(MalaPoint { x: alpha.to_vec(), logp, grad, aux: Some((fitted, terms)) })
    });
    if out.accepted {
        let (fitted, terms) = cur.aux.expect("accepted proposal carries its fit");
        cs.state.alpha = cur.x;
        cs.fitted = fitted;
        cs.terms = terms;
    }
    out
}

/// Shape and scale `(a, b)` of the inverse-gamma full conditional of `sigma2`.
pub fn sigma2_conditional(model: &Model, cs: &ChainState) -> (f64, f64) {
    let hp = model.hp;
    let a = hp.p1 + model.data.len() as f64 / 2.0;
    let b = 1.0
        + cs.fitted.rss / 2.0
        + cs.state.delta * cs.terms.roughness
        + cs.terms.penalty(hp.r) / (2.0 * hp.rho);
    (a, b)
}

pub fn gibbs_sigma2<R: Rng + ?Sized>(model: &Model, cs: &mut ChainState, rng: &mut R) {
    let (a, b) = sigma2_conditional(model, cs);
    let g = Gamma::new(a, 1.0 / b).expect("positive gamma parameters");
    let draw: f64 = g.sample(rng);
    if draw > 0.0 && draw.is_finite() {
        cs.state.sigma2 = 1.0 / draw;
    }
}

/// Shape and rate `(a, b)` of the gamma full conditional of `delta`.
pub fn delta_conditional(model: &Model, cs: &ChainState) -> (f64, f64) {
    (model.hp.p0, 1.0 + cs.terms.roughness / cs.state.sigma2)
}

pub fn gibbs_delta<R: Rng + ?Sized>(model: &Model, cs: &mut ChainState, rng: &mut R) {
    let (a, b) = delta_conditional(model, cs);
    let g = Gamma::new(a, 1.0 / b).expect("positive gamma parameters");
    let draw: f64 = g.sample(rng);
    if draw > 0.0 && draw.is_finite() {
        cs.state.delta = draw;
    }
}

/// Log of the proposal correction `q(lambda | lambda*) / q(lambda* | lambda)`
/// for truncated-normal proposals on `[0, lambda_u]`.
pub fn lambda_proposal_correction(lambda: f64, lambda_star: f64, tau: f64, lambda_u: f64) -> f64 {
    TruncatedNormal::new(lambda_star, tau, 0.0, lambda_u).ln_pdf(lambda)
        - TruncatedNormal::new(lambda, tau, 0.0, lambda_u).ln_pdf(lambda_star)
}

/// Metropolis–Hastings update of `lambda` with a truncated-normal random walk.
pub fn mh_lambda<R: Rng + ?Sized>(model: &Model, cs: &mut ChainState, tau: f64, rng: &mut R) -> StepOutcome {
    let hp = model.hp;
    let lambda = cs.state.lambda.clamp(f64::MIN_POSITIVE, hp.lambda_u);
    let proposal = TruncatedNormal::new(lambda, tau, 0.0, hp.lambda_u);
    let lambda_star = proposal.sample(rng);
    let u: f64 = rng.random();
    let rejected = StepOutcome { accepted: false, accept_prob: 0.0 };
    if !(lambda_star > 0.0) {
        return rejected;
    }
    let (ind, resid, rss) = model.residuals_for_lambda(&cs.fitted, cs.state.mu, lambda_star);
    let sigma2 = cs.state.sigma2;
    let log_ratio = (cs.fitted.rss - rss) / (2.0 * sigma2) + log_prior_lambda(lambda_star, hp)
        - log_prior_lambda(lambda, hp)
        + lambda_proposal_correction(lambda, lambda_star, tau, hp.lambda_u);
    if log_ratio.is_nan() {
        return rejected;
    }
    let accept_prob = log_ratio.min(0.0).exp();
    if u.ln() < log_ratio {
        cs.state.lambda = lambda_star;
        cs.fitted.ind = ind;
        cs.fitted.resid = resid;
        cs.fitted.rss = rss;
        cs.fitted.sums_valid = false;
        StepOutcome { accepted: true, accept_prob }
    } else {
        StepOutcome { accepted: false, accept_prob }
    }
}

/// Running sums over retained draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub count: usize,
    pub sum_mu: f64,
    pub sum_alpha: Vec<f64>,
    pub sum_log_sigma2: f64,
    pub sum_log_delta: f64,
    pub sum_log_lambda: f64,
    /// `sum_l t(alpha_i^(l); lambda^(l))` per entry.
    pub sum_ind: Vec<f64>,
    /// `sum_l alpha_i^(l) t(alpha_i^(l); lambda^(l))`.
    pub sum_alpha_ind: Vec<f64>,
    k: usize,
    eps0: f64,
}

impl ChainSummary {
    pub fn new(p: usize, k: usize, eps0: f64) -> Self {
        Self {
            count: 0,
            sum_mu: 0.0,
            sum_alpha: vec![0.0; p * k],
            sum_log_sigma2: 0.0,
            sum_log_delta: 0.0,
            sum_log_lambda: 0.0,
            sum_ind: vec![0.0; p],
            sum_alpha_ind: vec![0.0; p * k],
            k,
            eps0,
        }
    }

    pub fn from_draws(draws: &[ModelState], p: usize, k: usize, eps0: f64) -> Self {
        let mut s = Self::new(p, k, eps0);
        for d in draws {
            s.push(d);
        }
        s
    }

    pub fn basis_dim(&self) -> usize {
        self.k
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn push(&mut self, s: &ModelState) {
        let k = self.k;
        self.count += 1;
        self.sum_mu += s.mu;
        self.sum_log_sigma2 += s.sigma2.ln();
        self.sum_log_delta += s.delta.ln();
        self.sum_log_lambda += s.lambda.ln();
        for (t, a) in s.alpha.chunks(k).enumerate() {
            let ind = indicator_from_norm(a.iter().map(|v| v * v).sum(), s.lambda, self.eps0);
            self.sum_ind[t] += ind;
            for j in 0..k {
                self.sum_alpha[t * k + j] += a[j];
                self.sum_alpha_ind[t * k + j] += a[j] * ind;
            }
        }
    }

    /// Warm-start state: arithmetic means of `mu`, `alpha`; geometric means of `sigma2`, `delta`, `lambda`.
    pub fn average_state(&self) -> Option<ModelState> {
        if self.count == 0 {
            return None;
        }
        let c = self.count as f64;
        Some(ModelState {
            mu: self.sum_mu / c,
            alpha: self.sum_alpha.iter().map(|v| v / c).collect(),
            sigma2: (self.sum_log_sigma2 / c).exp(),
            delta: (self.sum_log_delta / c).exp(),
            lambda: (self.sum_log_lambda / c).exp(),
        })
    }
}

/// Attempts and acceptances of one Metropolis-type block.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockRate {
    pub attempts: usize,
    pub accepted: usize,
}

impl BlockRate {
    fn record(&mut self, o: StepOutcome) {
        self.attempts += 1;
        self.accepted += o.accepted as usize;
    }

    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.attempts as f64
    }
}

/// Acceptance counts split into burn-in and sampling phases.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AcceptanceLog {
    pub burn_mu: BlockRate,
    pub burn_alpha: BlockRate,
    pub burn_lambda: BlockRate,
    pub mu: BlockRate,
    pub alpha: BlockRate,
    pub lambda: BlockRate,
}

/// Step sizes of the three Metropolis-type blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub mu: f64,
    pub alpha: f64,
    pub lambda: f64,
}

/// Output of one chain run.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    /// Retained draws (empty unless requested in the config).
    pub draws: Vec<ModelState>,
    pub summary: ChainSummary,
    pub acceptance: AcceptanceLog,
    pub step_sizes: StepSizes,
    /// Training mean squared error `RSS / N` after every executed sweep.
    pub train_mse: Vec<f64>,
    pub final_state: ModelState,
    pub diverged: bool,
}

/// Run sweeps `start + 1 ..= I` from `init`. Step sizes start from the
/// hyperparameters and are adapted during burn-in only.
pub fn run_chain(model: &Model, init: ModelState, cfg: &ChainConfig, start: usize) -> Result<PosteriorSamples> {
    cfg.validate()?;
    if start >= cfg.burn_in {
        return Err(FenError::InvalidParameter(format!(
            "chain start {start} must precede burn-in end {}",
            cfg.burn_in
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hp = model.hp;
    let mut cs = ChainState::new(model, init)?;
    if !(cs.state.lambda > 0.0 && cs.state.lambda <= hp.lambda_u) {
        cs.state.lambda = cs.state.lambda.clamp(1e-12 * hp.lambda_u, hp.lambda_u);
        cs = ChainState::new(model, cs.state)?;
    }
    let mut tau = StepSizes { mu: hp.tau_mu, alpha: hp.tau_alpha, lambda: hp.tau_lambda };
    let mala_adapt = StepAdapter::new(cfg.target_accept_mala);
    let mh_adapt = StepAdapter::new(cfg.target_accept_mh);
    let mut summary = ChainSummary::new(model.p(), model.k(), hp.eps0);
    let mut draws = Vec::new();
    let mut acc = AcceptanceLog::default();
    let mut train_mse = Vec::with_capacity(cfg.total_iters - start);
    let n = model.data.len().max(1) as f64;
    let u = cfg.updates;
    let any_mh = u.mu || u.alpha || u.lambda;
    let mut reject_run = 0;
    let mut diverged = false;

    for it in (start + 1)..=cfg.total_iters {
        let burning = it <= cfg.burn_in;
        let mut moved = false;
        if u.mu {
            let o = mala_step_mu(model, &mut cs, tau.mu, &mut rng);
            moved |= o.accepted;
            if burning {
                acc.burn_mu.record(o);
                tau.mu = mala_adapt.adapt(tau.mu, it, o.accept_prob);
            } else {
                acc.mu.record(o);
            }
        }
        if u.alpha {
            let o = mala_step_alpha(model, &mut cs, tau.alpha, &mut rng);
            moved |= o.accepted;
            if burning {
                acc.burn_alpha.record(o);
                tau.alpha = mala_adapt.adapt(tau.alpha, it, o.accept_prob);
            } else {
                acc.alpha.record(o);
            }
        }
        if u.sigma2 {
            gibbs_sigma2(model, &mut cs, &mut rng);
        }
        if u.delta {
            gibbs_delta(model, &mut cs, &mut rng);
        }
        if u.lambda {
            let o = mh_lambda(model, &mut cs, tau.lambda, &mut rng);
            moved |= o.accepted;
            if burning {
                acc.burn_lambda.record(o);
                tau.lambda = mh_adapt.adapt(tau.lambda, it, o.accept_prob).min(hp.lambda_u);
            } else {
                acc.lambda.record(o);
            }
        }
        if any_mh {
            reject_run = if moved { 0 } else { reject_run + 1 };
            if reject_run >= DIVERGENCE_SWEEPS {
                diverged = true;
            }
        }
        train_mse.push(cs.fitted.rss / n);
        if !burning && (it - cfg.burn_in).is_multiple_of(cfg.thinning) {
            summary.push(&cs.state);
            if cfg.store_draws {
                draws.push(cs.state.clone());
            }
        }
    }
    Ok(PosteriorSamples {
        draws,
        summary,
        acceptance: acc,
        step_sizes: tau,
        train_mse,
        final_state: cs.state,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults() {
        let c = ChainConfig::default();
        assert_eq!((c.total_iters, c.burn_in, c.warmstart_offset, c.thinning), (20_000, 10_000, 2_000, 1));
        assert_eq!(c.retained(), 10_000);
        assert!(c.validate().is_ok());
        let bad = ChainConfig { burn_in: 100, warmstart_offset: 100, ..ChainConfig::new(200, 0) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn interior_lambda_correction_vanishes() {
        let c = lambda_proposal_correction(5.0, 5.01, 0.05, 10.0);
        assert!(c.abs() < 1e-6);
        assert!(lambda_proposal_correction(0.01, 0.03, 0.05, 10.0).abs() > 1e-3);
    }

    #[test]
    fn summary_average_is_geometric_for_scales() {
        let mk = |s: f64| ModelState { mu: s, alpha: vec![s, -s], sigma2: s, delta: s, lambda: s };
        let sum = ChainSummary::from_draws(&[mk(1.0), mk(4.0)], 1, 2, 0.1);
        let avg = sum.average_state().unwrap();
        assert_eq!(avg.mu, 2.5);
        assert_eq!(avg.alpha, vec![2.5, -2.5]);
        assert!((avg.sigma2 - 2.0).abs() < 1e-14);
        assert!((avg.lambda - 2.0).abs() < 1e-14);
    }
}
