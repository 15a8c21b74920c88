//! Calibration of the indicator smoothing `eps0` and the two-stage greedy
//! validation search over `(p0, r, rho)` with warm-started chains.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{FenError, Result};
use crate::grid::{build_grid_graph, IndexGraph, TensorShape};
use crate::model::{standardize, Dataset, HyperParams, IndicatorMode, Model, ModelState};
use crate::sampler::{initial_state, run_chain, ChainConfig, PosteriorSamples, StepSizes, UpdateMask};
use crate::selection::FitResult;
use crate::spline::{build_basis, SplineBasis};

/// Tail mass `eta` left outside the indicator's transition band.
pub const DEFAULT_ETA: f64 = 0.05;
/// `eps0` used when the calibration fit is flat.
pub const FALLBACK_EPS0: f64 = 1e-3;

/// `m` with `1/2 + arctan(m) / pi = 1 - eta`.
pub fn arctan_quantile(eta: f64) -> f64 {
    (PI * (0.5 - eta)).tan()
}

/// `eps0 = (max - min) / (2 m)` over squared coefficient norms; the flag marks the fallback.
pub fn eps0_from_norms(norms: &[f64], eta: f64) -> (f64, bool) {
    let (min, max) = norms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(max > min) || !max.is_finite() {
        return (FALLBACK_EPS0, true);
    }
    ((max - min) / (2.0 * arctan_quantile(eta)), false)
}

/// Hyperparameter grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    pub p0: Vec<f64>,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
}

pub const DEFAULT_P0_SCALES: [f64; 5] = [0.5, 5.0, 50.0, 500.0, 5000.0];
pub const DEFAULT_R_GRID: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.0];
pub const DEFAULT_RHO_GRID: [f64; 8] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0];

impl Grids {
    /// Defaults; `p0` values are multiples of `entries * K`.
    pub fn default_for(entries: usize, k: usize) -> Self {
        let scale = (entries * k) as f64;
        Self {
            p0: DEFAULT_P0_SCALES.iter().map(|s| s * scale).collect(),
            r: DEFAULT_R_GRID.to_vec(),
            rho: DEFAULT_RHO_GRID.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p0.is_empty() || self.r.is_empty() || self.rho.is_empty() {
            return Err(FenError::InvalidParameter("hyperparameter grids must be nonempty".into()));
        }
        if self.p0.iter().chain(&self.rho).any(|v| !(*v > 0.0)) {
            return Err(FenError::InvalidParameter("p0 and rho grids must be positive".into()));
        }
        if self.r.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(FenError::InvalidParameter("r grid must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Boustrophedon traversal of a `J x T` grid, 1-based: odd rows left to right, even rows right to left.
pub fn snake_order(j: usize, t: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(j * t);
    for row in 1..=j {
        if row % 2 == 1 {
            out.extend((1..=t).map(|c| (row, c)));
        } else {
            out.extend((1..=t).rev().map(|c| (row, c)));
        }
    }
    out
}

/// Data, graph and basis shared by every chain of a tuning run.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub train: &'a Dataset,
    pub valid: &'a Dataset,
    pub graph: &'a IndexGraph,
    pub basis: &'a SplineBasis,
}

/// Output of the two-step `eps0` calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub eps0: f64,
    /// `eps0` after the indicator-free pre-run.
    pub eps0_initial: f64,
    pub lambda_u: f64,
    /// Set when either step fell back to [`FALLBACK_EPS0`].
    pub degenerate: bool,
}

fn posterior_mean_norms(samples: &PosteriorSamples, k: usize) -> Vec<f64> {
    let c = samples.summary.count.max(1) as f64;
    samples.summary.sum_alpha.chunks(k).map(|a| a.iter().map(|v| (v / c).powi(2)).sum()).collect()
}

/// Two-step calibration at `r = 1`, `rho = rho_grid[0]`, `p0 = p0_grid[0]`:
/// (i) fit with the indicator fixed at 1 and no `lambda` updates, set `eps0`
/// from the spread of `||alpha_hat_i||^2` and `lambda_u` to its maximum;
/// (ii) rerun the full sampler with that `eps0` and recompute it.
pub fn calibrate_eps0(prob: &Problem, base: &HyperParams, grids: &Grids, cfg: &ChainConfig) -> Result<Calibration> {
    let k = prob.basis.dim();
    let mut hp = base.clone();
    hp.r = 1.0;
    hp.rho = grids.rho[0];
    hp.p0 = grids.p0[0];
    hp.indicator = IndicatorMode::One;
    let model = Model::new(prob.train, prob.graph, prob.basis, &hp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0001);
    let init = initial_state(&model, &mut rng);
    let step1_cfg = ChainConfig {
        seed: cfg.seed.wrapping_add(101),
        updates: UpdateMask { lambda: false, ..cfg.updates },
        ..cfg.clone()
    };
    let s1 = run_chain(&model, init, &step1_cfg, 0)?;
    let norms = posterior_mean_norms(&s1, k);
    let (eps0_initial, flat1) = eps0_from_norms(&norms, DEFAULT_ETA);
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let lambda_u = if max_norm > 0.0 { max_norm } else { 1.0 };

    let mut hp2 = hp.clone();
    hp2.indicator = IndicatorMode::Smooth;
    hp2.eps0 = eps0_initial;
    hp2.lambda_u = lambda_u;
    hp2.tau_mu = s1.step_sizes.mu;
    hp2.tau_alpha = s1.step_sizes.alpha;
    let model2 = model.with_hp(&hp2);
    let mut init2 = s1.summary.average_state().unwrap_or(s1.final_state);
    init2.lambda = lambda_u / 2.0;
    let step2_cfg = ChainConfig { seed: cfg.seed.wrapping_add(202), ..cfg.clone() };
    let s2 = run_chain(&model2, init2, &step2_cfg, 0)?;
    let (eps0, flat2) = eps0_from_norms(&posterior_mean_norms(&s2, k), DEFAULT_ETA);
    Ok(Calibration { eps0, eps0_initial, lambda_u, degenerate: flat1 || flat2 })
}

/// A point of the hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub p0: f64,
    pub r: f64,
    pub rho: f64,
}

/// One row of the validation-loss table.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    /// 1 for the `(p0, rho)` scan, 2 for the `(r, rho)` scan.
    pub stage: u8,
    /// 1-based row index (`p0` in stage 1, `r` in stage 2).
    pub row: usize,
    /// 1-based `rho` index.
    pub col: usize,
    pub point: GridPoint,
    pub loss: f64,
    pub diverged: bool,
}

/// Result of the greedy search.
#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best: GridPoint,
    pub best_loss: f64,
    pub table: Vec<LossRow>,
    pub eps0: f64,
    pub lambda_u: f64,
    /// Averaged state and final step sizes of the chain at the best point.
    pub best_warm: (ModelState, StepSizes),
}

/// Tuning controls.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub chain: ChainConfig,
    /// Snake-order warm starts (sequential). When false every grid point starts cold and runs in parallel.
    pub warm_start: bool,
}

impl TuneConfig {
    pub fn new(chain: ChainConfig) -> Self {
        Self { chain, warm_start: true }
    }
}

struct Segment {
    loss: f64,
    diverged: bool,
    warm: (ModelState, StepSizes),
}

fn segment_seed(base: u64, stage: u8, row: usize, col: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((stage as u64) << 40)
        .wrapping_add((row as u64) << 20)
        .wrapping_add(col as u64)
}

/// Mean squared validation error of the thresholded point estimate.
pub fn validation_loss(fit: &FitResult, valid: &Dataset) -> f64 {
    let yhat = fit.predict(valid);
    let n = valid.len().max(1) as f64;
    yhat.iter().zip(valid.y()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n
}

fn run_segment(
    prob: &Problem,
    hp: &HyperParams,
    cfg: &ChainConfig,
    warm: Option<&(ModelState, StepSizes)>,
) -> Result<Segment> {
    let mut hp = hp.clone();
    if let Some((_, steps)) = warm {
        hp.tau_mu = steps.mu;
        hp.tau_alpha = steps.alpha;
        hp.tau_lambda = steps.lambda;
    }
    let model = Model::new(prob.train, prob.graph, prob.basis, &hp)?;
    let (init, start) = match warm {
        Some((state, _)) => (state.clone(), cfg.warmstart_offset),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC01D);
            (initial_state(&model, &mut rng), 0)
        }
    };
    let samples = run_chain(&model, init, cfg, start)?;
    let fit = FitResult::from_summary(&samples.summary, prob.graph.shape(), 0.0, 1.0)?;
    let loss = if samples.diverged { f64::INFINITY } else { validation_loss(&fit, prob.valid) };
    let avg = samples.summary.average_state().unwrap_or(samples.final_state.clone());
    Ok(Segment { loss: if loss.is_nan() { f64::INFINITY } else { loss }, diverged: samples.diverged, warm: (avg, samples.step_sizes) })
}

fn hp_at(base: &HyperParams, point: GridPoint) -> HyperParams {
    HyperParams { p0: point.p0, r: point.r, rho: point.rho, ..base.clone() }
}

fn argmin(rows: &[LossRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.loss < rows[best].loss {
            best = i;
        }
    }
    best
}

/// Two-stage greedy search. Stage 1 scans `(p0, rho)` at `r = r_grid[0]`;
/// stage 2 scans `(r, rho)` at the best `p0`. `base` must carry the calibrated
/// `eps0` and `lambda_u`.
pub fn greedy_search(prob: &Problem, base: &HyperParams, grids: &Grids, cfg: &TuneConfig) -> Result<TuneResult> {
    grids.validate()?;
    cfg.chain.validate()?;
    let t_len = grids.rho.len();
    let stage_points = |stage: u8, fixed: f64| -> Vec<(usize, usize, GridPoint)> {
        let rows = if stage == 1 { grids.p0.len() } else { grids.r.len() };
        snake_order(rows, t_len)
            .into_iter()
            .map(|(j, t)| {
                let point = if stage == 1 {
                    GridPoint { p0: grids.p0[j - 1], r: grids.r[0], rho: grids.rho[t - 1] }
                } else {
                    GridPoint { p0: fixed, r: grids.r[j - 1], rho: grids.rho[t - 1] }
                };
                (j, t, point)
            })
            .collect()
    };

    let mut table = Vec::new();
    let mut warm_states: Vec<(usize, (ModelState, StepSizes))> = Vec::new();

    let run_stage = |stage: u8,
                     points: &[(usize, usize, GridPoint)],
                     first_warm: Option<(ModelState, StepSizes)>|
     -> Result<Vec<(LossRow, (ModelState, StepSizes))>> {
        let make_cfg = |j: usize, t: usize| ChainConfig { seed: segment_seed(cfg.chain.seed, stage, j, t), ..cfg.chain.clone() };
        if cfg.warm_start {
            let mut out = Vec::with_capacity(points.len());
            let mut warm = first_warm;
            for &(j, t, point) in points {
                let seg = run_segment(prob, &hp_at(base, point), &make_cfg(j, t), warm.as_ref())?;
                warm = Some(seg.warm.clone());
                out.push((LossRow { stage, row: j, col: t, point, loss: seg.loss, diverged: seg.diverged }, seg.warm));
            }
            Ok(out)
        } else {
            points
                .par_iter()
                .map(|&(j, t, point)| {
                    let seg = run_segment(prob, &hp_at(base, point), &make_cfg(j, t), None)?;
                    Ok((LossRow { stage, row: j, col: t, point, loss: seg.loss, diverged: seg.diverged }, seg.warm))
                })
                .collect()
        }
    };

    let stage1 = run_stage(1, &stage_points(1, 0.0), None)?;
    for (i, (row, warm)) in stage1.into_iter().enumerate() {
        table.push(row);
        warm_states.push((i, warm));
    }
    let j0 = table[argmin(&table)].row;
    // Stage 2 starts from the stage-1 chain at (j0, 1), which neighbours its first point.
    let seed_idx = table.iter().position(|r| r.row == j0 && r.col == 1).expect("stage-1 point exists");
    let first_warm = warm_states[seed_idx].1.clone();
    let stage2 = run_stage(2, &stage_points(2, grids.p0[j0 - 1]), Some(first_warm))?;
    for (row, warm) in stage2 {
        warm_states.push((table.len(), warm));
        table.push(row);
    }
    let best_idx = argmin(&table);
    Ok(TuneResult {
        best: table[best_idx].point,
        best_loss: table[best_idx].loss,
        eps0: base.eps0,
        lambda_u: base.lambda_u,
        best_warm: warm_states[best_idx].1.clone(),
        table,
    })
}

/// Deterministic shuffled split of `0..n` into training and validation indices, `ratio : 1`.
pub fn split_indices(n: usize, ratio: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * ratio / (ratio + 1);
    let valid = idx.split_off(n_train);
    (idx, valid)
}

/// Everything produced by a tune-then-fit run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub shape: TensorShape,
    pub basis: SplineBasis,
    pub calibration: Calibration,
    pub tune: TuneResult,
    pub final_samples: PosteriorSamples,
    pub fit: FitResult,
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
    /// Whether the final fit used training and validation data together.
    pub pooled: bool,
}

/// Options of [`tune_and_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub tune: TuneConfig,
    /// Grids; `None` means the defaults for the data's shape and basis.
    pub grids: Option<Grids>,
    /// `p0` grid given as multiples of `entries * K` (used when `grids` is `None`).
    pub p0_scales: Option<Vec<f64>>,
    pub r_grid: Option<Vec<f64>>,
    pub rho_grid: Option<Vec<f64>>,
    pub pooled_final: bool,
    pub split_ratio: usize,
}

impl PipelineConfig {
    pub fn new(chain: ChainConfig) -> Self {
        Self {
            tune: TuneConfig::new(chain),
            grids: None,
            p0_scales: None,
            r_grid: None,
            rho_grid: None,
            pooled_final: false,
            split_ratio: 5,
        }
    }

    pub fn grids_for(&self, entries: usize, k: usize) -> Grids {
        if let Some(g) = &self.grids {
            return g.clone();
        }
        let mut g = Grids::default_for(entries, k);
        if let Some(s) = &self.p0_scales {
            g.p0 = s.iter().map(|v| v * (entries * k) as f64).collect();
        }
        if let Some(r) = &self.r_grid {
            g.r = r.clone();
        }
        if let Some(rho) = &self.rho_grid {
            g.rho = rho.clone();
        }
        g
    }
}

impl PipelineOutput {
    /// Whether the final chain stalled (see [`DIVERGENCE_SWEEPS`](crate::sampler::DIVERGENCE_SWEEPS)).
    pub fn diverged(&self) -> bool {
        self.final_samples.diverged
    }
}

fn gather(x: &[f64], y: &[f64], p: usize, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(idx.len() * p);
    let mut ys = Vec::with_capacity(idx.len());
    for &i in idx {
        xs.extend_from_slice(&x[i * p..(i + 1) * p]);
        ys.push(y[i]);
    }
    (xs, ys)
}

/// Split, standardize, build the basis, calibrate `eps0`, tune, and refit at the best grid point.
/// A divergent final chain is reported through [`PipelineOutput::diverged`], not as an error.
pub fn tune_and_fit(x: &[f64], y: &[f64], shape: &TensorShape, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let p = shape.size();
    if x.len() != y.len() * p {
        return Err(FenError::DimensionMismatch(format!("{} covariates for {} responses", x.len(), y.len())));
    }
    let (train_idx, valid_idx) = split_indices(y.len(), cfg.split_ratio, cfg.tune.chain.seed ^ 0x5B11);
    if valid_idx.is_empty() {
        return Err(FenError::SampleTooSmall(y.len()));
    }
    let (x_tr, y_tr) = gather(x, y, p, &train_idx);
    let (x_va, y_va) = gather(x, y, p, &valid_idx);
    let (_, y_mean, y_sd) = standardize(&y_tr);
    let scale = |v: &[f64]| v.iter().map(|y| (y - y_mean) / y_sd).collect::<Vec<f64>>();

    let basis = build_basis(train_idx.len(), &x_tr, crate::model::DEFAULT_DELTA_PRIME)?;
    let k = basis.dim();
    let graph = build_grid_graph(shape);
    let train = Dataset::new(shape.clone(), x_tr.clone(), scale(&y_tr), &basis)?;
    let valid = Dataset::new(shape.clone(), x_va.clone(), scale(&y_va), &basis)?;
    let grids = cfg.grids_for(p, k);
    grids.validate()?;
    let prob = Problem { train: &train, valid: &valid, graph: &graph, basis: &basis };

    let mut base = HyperParams::new(p, k);
    let calibration = calibrate_eps0(&prob, &base, &grids, &cfg.tune.chain)?;
    base.eps0 = calibration.eps0;
    base.lambda_u = calibration.lambda_u;
    let tune = greedy_search(&prob, &base, &grids, &cfg.tune)?;

    let pooled_data;
    let final_data = if cfg.pooled_final {
        let mut xa = x_tr;
        xa.extend_from_slice(&x_va);
        let mut ya = scale(&y_tr);
        ya.extend(scale(&y_va));
        pooled_data = Dataset::new(shape.clone(), xa, ya, &basis)?;
        &pooled_data
    } else {
        &train
    };
    let final_prob = Problem { train: final_data, ..prob };
    let hp = hp_at(&base, tune.best);
    let final_cfg = ChainConfig { seed: segment_seed(cfg.tune.chain.seed, 3, 0, 0), ..cfg.tune.chain.clone() };
    let mut hp_final = hp.clone();
    let (warm_state, steps) = &tune.best_warm;
    hp_final.tau_mu = steps.mu;
    hp_final.tau_alpha = steps.alpha;
    hp_final.tau_lambda = steps.lambda;
    let model = Model::new(final_prob.train, &graph, &basis, &hp_final)?;
    let final_samples = run_chain(&model, warm_state.clone(), &final_cfg, final_cfg.warmstart_offset)?;
    let fit = FitResult::from_summary(&final_samples.summary, shape, y_mean, y_sd)?;
    Ok(PipelineOutput {
        shape: shape.clone(),
        basis,
        calibration,
        tune,
        final_samples,
        fit,
        train_idx,
        valid_idx,
        pooled: cfg.pooled_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_for_default_eta() {
        let m = arctan_quantile(0.05);
        assert!((m - 6.313751514675).abs() < 1e-9);
        assert!((0.5 + m.atan() / PI - 0.95).abs() < 1e-14);
    }

    #[test]
    fn eps0_formula() {
        let (e, flat) = eps0_from_norms(&[0.0, 1.3, 2.0], 0.05);
        assert!(!flat);
        assert!((e - 2.0 / (2.0 * 6.313751514675)).abs() < 1e-9);
        assert!((e - 0.1584).abs() < 1e-4);
        assert_eq!(eps0_from_norms(&[0.7, 0.7], 0.05), (FALLBACK_EPS0, true));
    }

    #[test]
    fn snake_examples() {
        assert_eq!(snake_order(2, 3), vec![(1, 1), (1, 2), (1, 3), (2, 3), (2, 2), (2, 1)]);
        assert_eq!(snake_order(1, 4), vec![(1, 1), (1, 2), (1, 3), (1, 4)]);
    }

    #[test]
    fn snake_covers_grid_with_unit_steps() {
        let order = snake_order(4, 5);
        assert_eq!(order.len(), 20);
        let mut seen = std::collections::HashSet::new();
        for w in order.windows(2) {
            let d = w[0].0.abs_diff(w[1].0) + w[0].1.abs_diff(w[1].1);
            assert_eq!(d, 1);
        }
        for o in &order {
            assert!(seen.insert(*o));
        }
    }

    #[test]
    fn default_grids() {
        let g = Grids::default_for(225, 4);
        assert_eq!(g.p0[0], 450.0);
        assert_eq!(g.p0.len() * g.rho.len() + g.r.len() * g.rho.len(), 80);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn split_ratio() {
        let (tr, va) = split_indices(600, 5, 1);
        assert_eq!((tr.len(), va.len()), (500, 100));
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort();
        assert_eq!(all, (0..600).collect::<Vec<_>>());
    }
}
