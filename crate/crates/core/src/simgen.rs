//! Synthetic data: active-region masks, graph-Laplacian-smooth coefficient
//! fields, the nine simulation settings, SNR-calibrated responses, and the
//! linear toy designs.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::f64::consts::PI;

use crate::error::{FenError, Result};
use crate::grid::{build_grid_graph, smooth_eigvectors, IndexGraph, TensorShape};

const HORSE: &str = include_str!("../data/horse.txt");
const SIX: &str = include_str!("../data/six.txt");

/// Number of Laplacian eigenfields combined into a smooth field.
pub const DEFAULT_EIGEN_COUNT: usize = 80;
/// Draws used to estimate the signal variance for noise calibration.
pub const SNR_PREPASS: usize = 100_000;

/// Active region of a 2-way coefficient field with grayscale weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMask {
    p1: usize,
    p2: usize,
    /// Weights in `[0, 1]`, column-major; zero means inactive.
    weights: Vec<f64>,
}

impl ShapeMask {
    /// `rows[i][j]` gives the weight of entry `(i, j)`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p1 = rows.len();
        let p2 = rows.first().map_or(0, Vec::len);
        if p1 == 0 || p2 == 0 || rows.iter().any(|r| r.len() != p2) {
            return Err(FenError::InvalidShape("mask rows are empty or ragged".into()));
        }
        let mut weights = vec![0.0; p1 * p2];
        for (i, row) in rows.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&w) {
                    return Err(FenError::Domain(w));
                }
                weights[i + j * p1] = w;
            }
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(FenError::InvalidParameter("mask has no active entry".into()));
        }
        Ok(Self { p1, p2, weights })
    }

    /// Parse `"P1 P2"` followed by `P1` rows of `P2` values in `[0, 1]`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| FenError::InvalidShape("empty mask file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| FenError::InvalidShape(format!("bad mask header {header:?}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(FenError::InvalidShape(format!("mask header {header:?} needs two sizes")));
        }
        let rows: Vec<Vec<f64>> = lines
            .map(|l| {
                l.split_whitespace()
                    .map(|v| v.parse().map_err(|_| FenError::InvalidParameter(format!("bad mask value {v:?}"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        if rows.len() != dims[0] || rows.iter().any(|r| r.len() != dims[1]) {
            return Err(FenError::InvalidShape(format!("mask body does not match header {dims:?}")));
        }
        Self::from_rows(&rows)
    }

    /// Text form accepted by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.p1, self.p2);
        for i in 0..self.p1 {
            let row: Vec<String> = (0..self.p2).map(|j| format!("{}", self.weight(i, j))).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Two square blocks on the diagonal; on a 15 x 15 grid rows/columns 3..7 and 9..13 (1-based).
    pub fn low_rank(p1: usize, p2: usize) -> Result<Self> {
        let span = |p: usize, a: f64, b: f64| {
            let lo = (a * p as f64 / 15.0).round() as usize;
            let hi = ((b * p as f64 / 15.0).round() as usize).max(lo + 1).min(p);
            lo..hi
        };
        let mut rows = vec![vec![0.0; p2]; p1];
        for (r, c) in [(span(p1, 2.0, 7.0), span(p2, 2.0, 7.0)), (span(p1, 8.0, 13.0), span(p2, 8.0, 13.0))] {
            for i in r.clone() {
                for j in c.clone() {
                    rows[i][j] = 1.0;
                }
            }
        }
        Self::from_rows(&rows)
    }

    /// Built-in horse silhouette, resampled to `p1 x p2` by nearest neighbour.
    pub fn horse(p1: usize, p2: usize) -> Result<Self> {
        Self::parse(HORSE)?.resample(p1, p2)
    }

    /// Built-in grayscale handwritten six, resampled to `p1 x p2` by nearest neighbour.
    pub fn six(p1: usize, p2: usize) -> Result<Self> {
        Self::parse(SIX)?.resample(p1, p2)
    }

    pub fn resample(&self, p1: usize, p2: usize) -> Result<Self> {
        if (p1, p2) == (self.p1, self.p2) {
            return Ok(self.clone());
        }
        let pick = |i: usize, p: usize, src: usize| (((i as f64 + 0.5) * src as f64 / p as f64) as usize).min(src - 1);
        let rows: Vec<Vec<f64>> = (0..p1)
            .map(|i| (0..p2).map(|j| self.weight(pick(i, p1, self.p1), pick(j, p2, self.p2))).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }

    /// Weight of 0-based entry `(i, j)`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i + j * self.p1]
    }

    /// Weights indexed by vectorized offset.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn active(&self) -> Vec<bool> {
        self.weights.iter().map(|&w| w > 0.0).collect()
    }
}

/// Random nonnegative combination `sum_l gamma_l U_l`, `gamma_l ~ U(0, 1)`, of the smoothest Laplacian eigenfields.
pub fn smooth_field<R: Rng + ?Sized>(graph: &IndexGraph, l_count: usize, rng: &mut R) -> Result<Vec<f64>> {
    let fields = smooth_eigvectors(graph, l_count)?;
    let mut out = vec![0.0; graph.node_count()];
    for f in &fields {
        let gamma: f64 = rng.random();
        for (o, v) in out.iter_mut().zip(f.values.iter()) {
            *o += gamma * v;
        }
    }
    Ok(out)
}

/// Affine map taking the range of `field` over active entries onto `[lo, hi]`.
/// A constant field maps to the midpoint; the returned flag reports that case.
pub fn rescale_to(field: &[f64], lo: f64, hi: f64, active: &[bool]) -> (Vec<f64>, bool) {
    let vals = field.iter().zip(active).filter(|(_, &a)| a).map(|(v, _)| *v);
    let (min, max) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(max > min) {
        return (vec![0.5 * (lo + hi); field.len()], true);
    }
    let scale = (hi - lo) / (max - min);
    (field.iter().map(|v| (lo + (v - min) * scale).clamp(lo.min(hi), hi.max(lo))).collect(), false)
}

/// Per-entry coefficients of `f(x) = a sin(cx) + a cos(dx) + b x - m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFields {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub m: Vec<f64>,
    pub active: Vec<bool>,
}

/// `int_0^1 a sin(cx) + a cos(dx) + b x dx`, with the limits at `c = 0` and `d = 0`.
pub fn centering_constant(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let sin_part = if c == 0.0 { 0.0 } else { (1.0 - c.cos()) / c };
    let cos_part = if d == 0.0 { 1.0 } else { d.sin() / d };
    a * sin_part + a * cos_part + 0.5 * b
}

impl CoefficientFields {
    /// Inactive everywhere.
    pub fn zeros(p: usize) -> Self {
        Self {
            a: vec![0.0; p],
            b: vec![0.0; p],
            c: vec![0.0; p],
            d: vec![0.0; p],
            m: vec![0.0; p],
            active: vec![false; p],
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `f_t(x)`; zero off the active set.
    pub fn eval(&self, t: usize, x: f64) -> f64 {
        if !self.active[t] {
            return 0.0;
        }
        let a = self.a[t];
        a * (self.c[t] * x).sin() + a * (self.d[t] * x).cos() + self.b[t] * x - self.m[t]
    }

    /// Signal `sum_t f_t(x_t)` for one vectorized covariate tensor.
    pub fn signal(&self, x: &[f64]) -> f64 {
        (0..self.len()).filter(|&t| self.active[t]).map(|t| self.eval(t, x[t])).sum()
    }
}

/// Shape of the active region of a setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    LowRank,
    Horse,
    Six,
}

/// One of the nine simulation settings with all coefficient fields filled in.
#[derive(Debug, Clone)]
pub struct SimSetting {
    pub id: u8,
    pub pattern: Pattern,
    pub snr: f64,
    pub linear: bool,
    pub shape: TensorShape,
    pub mask: ShapeMask,
    pub fields: CoefficientFields,
}

/// Pattern, SNR and linearity of setting `id`.
pub fn setting_spec(id: u8) -> Result<(Pattern, f64, bool)> {
    let pattern = match id {
        1..=3 => Pattern::LowRank,
        4..=6 => Pattern::Horse,
        7..=9 => Pattern::Six,
        _ => return Err(FenError::InvalidParameter(format!("setting {id} is not in 1..=9"))),
    };
    let snr = if id % 3 == 2 { 50.0 } else { 5.0 };
    Ok((pattern, snr, id.is_multiple_of(3)))
}

/// Build setting `id` on a `p1 x p2` grid. `mask` overrides the built-in
/// pattern. At most `l_count` eigenfields are used (fewer on small grids).
pub fn make_setting<R: Rng + ?Sized>(
    id: u8,
    p1: usize,
    p2: usize,
    mask: Option<ShapeMask>,
    l_count: usize,
    rng: &mut R,
) -> Result<SimSetting> {
    let (pattern, snr, linear) = setting_spec(id)?;
    let mask = match mask {
        Some(m) => m.resample(p1, p2)?,
        None => match pattern {
            Pattern::LowRank => ShapeMask::low_rank(p1, p2)?,
            Pattern::Horse => ShapeMask::horse(p1, p2)?,
            Pattern::Six => ShapeMask::six(p1, p2)?,
        },
    };
    let shape = TensorShape::new(vec![p1, p2])?;
    let graph = build_grid_graph(&shape);
    let p = shape.size();
    let active = mask.active();
    let mut f = CoefficientFields::zeros(p);
    f.active = active.clone();

    let (a, c, d): (Vec<f64>, Vec<f64>, Vec<f64>) = if linear {
        (vec![0.0; p], vec![0.0; p], vec![0.0; p])
    } else {
        match pattern {
            Pattern::LowRank => (vec![1.0; p], vec![1.5 * PI; p], vec![1.5 * PI; p]),
            Pattern::Horse | Pattern::Six => {
                let l = l_count.min(p - 1);
                let u1 = smooth_field(&graph, l, rng)?;
                let u2 = smooth_field(&graph, l, rng)?;
                let u3 = smooth_field(&graph, l, rng)?;
                let a = if pattern == Pattern::Horse {
                    u1.iter().map(|u| u + 2.0).collect()
                } else {
                    mask.weights().iter().map(|w| 2.0 * w + 1.0).collect()
                };
                let (v2, _) = rescale_to(&u2, PI, 1.5 * PI, &active);
                let (v3, _) = rescale_to(&u3, PI, 1.5 * PI, &active);
                (a, v2, v3)
            }
        }
    };
    for t in (0..p).filter(|&t| active[t]) {
        f.a[t] = a[t];
        f.c[t] = c[t];
        f.d[t] = d[t];
        f.b[t] = if linear { 1.0 } else { 2.0 / PI * a[t] * (c[t] + d[t]) };
        f.m[t] = centering_constant(f.a[t], f.b[t], f.c[t], f.d[t]);
    }
    Ok(SimSetting { id, pattern, snr, linear, shape, mask, fields: f })
}

/// Sample variance of the signal over `draws` uniform covariate tensors.
pub fn signal_variance<R: Rng + ?Sized>(fields: &CoefficientFields, draws: usize, rng: &mut R) -> f64 {
    let p = fields.len();
    let mut x = vec![0.0; p];
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        for v in &mut x {
            *v = rng.random();
        }
        let sig = fields.signal(&x);
        s += sig;
        s2 += sig * sig;
    }
    let n = draws as f64;
    (s2 - s * s / n) / (n - 1.0)
}

/// Noise variance `Var(signal) / SNR`.
pub fn noise_variance<R: Rng + ?Sized>(setting: &SimSetting, rng: &mut R) -> f64 {
    signal_variance(&setting.fields, SNR_PREPASS, rng) / setting.snr
}

/// Generated covariates (each tensor vectorized, concatenated), responses and noiseless signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub signal: Vec<f64>,
}

/// `X ~ U(0, 1)` entrywise, `y = sum_t f_t(X_t) + eps`, `eps ~ N(0, noise_var)`.
pub fn generate<R: Rng + ?Sized>(fields: &CoefficientFields, n: usize, noise_var: f64, rng: &mut R) -> SimData {
    let p = fields.len();
    let mut x = vec![0.0; n * p];
    let mut y = Vec::with_capacity(n);
    let mut signal = Vec::with_capacity(n);
    let sd = noise_var.max(0.0).sqrt();
    for row in x.chunks_mut(p.max(1)).take(n) {
        for v in row.iter_mut() {
            *v = rng.random();
        }
        let s = fields.signal(row);
        let z: f64 = StandardNormal.sample(rng);
        signal.push(s);
        y.push(s + sd * z);
    }
    SimData { n, x, y, signal }
}

/// Truth fields of the linear toy experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    PiecewiseConstant,
    PiecewiseSmooth,
}

pub const TOY_SIDE: usize = 15;

/// 15 x 15 coefficient field (column-major) for a toy experiment.
///
/// Piecewise constant: value 3 on rows/cols 3..7, value 6 on rows 3..7 x
/// cols 8..13, value 9 on rows 8..13 x cols 3..9 (1-based), zero elsewhere.
/// Piecewise smooth: a center square `|i - 8|, |j - 8| <= 2` with
/// `4 + 2 cos(pi r / 6)` and a ring `r <= 6` around it with
/// `2 cos(pi (r - 2.5) / 7)`, `r` the distance to the center entry.
pub fn toy_design(kind: ToyKind) -> Vec<f64> {
    let n = TOY_SIDE;
    let mut beta = vec![0.0; n * n];
    for i in 1..=n {
        for j in 1..=n {
            let v = match kind {
                ToyKind::PiecewiseConstant => {
                    if (3..=7).contains(&i) && (3..=7).contains(&j) {
                        3.0
                    } else if (3..=7).contains(&i) && (8..=13).contains(&j) {
                        6.0
                    } else if (8..=13).contains(&i) && (3..=9).contains(&j) {
                        9.0
                    } else {
                        0.0
                    }
                }
                ToyKind::PiecewiseSmooth => {
                    let (di, dj) = (i as f64 - 8.0, j as f64 - 8.0);
                    let r = (di * di + dj * dj).sqrt();
                    if di.abs() <= 2.0 && dj.abs() <= 2.0 {
                        4.0 + 2.0 * (PI * r / 6.0).cos()
                    } else if r <= 6.0 {
                        2.0 * (PI * (r - 2.5) / 7.0).cos()
                    } else {
                        0.0
                    }
                }
            };
            beta[(i - 1) + (j - 1) * n] = v;
        }
    }
    beta
}

/// `N` toy samples: `X ~ U(0, 1)` entrywise (row-major `N x p`), `y = X beta + N(0, 1)`.
pub fn generate_toy<R: Rng + ?Sized>(beta: &[f64], n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let p = beta.len();
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut x = vec![0.0; n * p];
    let mut y = Vec::with_capacity(n);
    for row in x.chunks_mut(p) {
        let mut s = 0.0;
        for (v, b) in row.iter_mut().zip(beta) {
            *v = rng.random();
            s += *v * b;
        }
        y.push(s + noise.sample(rng));
    }
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builtin_masks_parse() {
        let h = ShapeMask::horse(15, 15).unwrap();
        let s = ShapeMask::six(15, 15).unwrap();
        assert!(h.active().iter().filter(|&&a| a).count() > 40);
        assert!(s.weights().iter().any(|&w| w > 0.0 && w < 1.0));
        let lr = ShapeMask::low_rank(15, 15).unwrap();
        assert_eq!(lr.active().iter().filter(|&&a| a).count(), 50);
        assert_eq!(lr.weight(2, 2), 1.0);
        assert_eq!(lr.weight(1, 2), 0.0);
        assert_eq!(lr.weight(12, 12), 1.0);
    }

    #[test]
    fn mask_text_round_trip() {
        let s = ShapeMask::six(15, 15).unwrap();
        assert_eq!(ShapeMask::parse(&s.to_text()).unwrap(), s);
        assert!(ShapeMask::parse("2 2\n0 0\n0 0\n").is_err());
        assert!(ShapeMask::parse("2 2\n0 1\n").is_err());
    }

    #[test]
    fn setting_two_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = make_setting(2, 15, 15, None, 80, &mut rng).unwrap();
        assert_eq!(s.snr, 50.0);
        let t = s.mask.active().iter().position(|&a| a).unwrap();
        assert_eq!(s.fields.a[t], 1.0);
        assert!((s.fields.b[t] - 6.0).abs() < 1e-14);
        assert!((s.fields.m[t] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn linear_settings_are_centered_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for id in [3, 6, 9] {
            let s = make_setting(id, 15, 15, None, 80, &mut rng).unwrap();
            let t = s.mask.active().iter().position(|&a| a).unwrap();
            for x in [0.0, 0.3, 1.0] {
                assert!((s.fields.eval(t, x) - (x - 0.5)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rescale_examples() {
        let act = [true, true, true];
        let (v, flat) = rescale_to(&[0.0, 1.0, 0.5], PI, 1.5 * PI, &act);
        assert!(!flat);
        assert_eq!((v[0], v[1]), (PI, 1.5 * PI));
        let (w, _) = rescale_to(&v, PI, 1.5 * PI, &act);
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).abs() < 1e-14);
        }
        let (c, flat) = rescale_to(&[2.0; 3], PI, 1.5 * PI, &act);
        assert!(flat);
        assert_eq!(c[0], 1.25 * PI);
    }

    #[test]
    fn invalid_setting() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(make_setting(10, 15, 15, None, 80, &mut rng).is_err());
        assert!(make_setting(0, 15, 15, None, 80, &mut rng).is_err());
    }

    #[test]
    fn toy_fields() {
        let pc = toy_design(ToyKind::PiecewiseConstant);
        let mut vals: Vec<f64> = pc.clone();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals, vec![0.0, 3.0, 6.0, 9.0]);
        for kind in [ToyKind::PiecewiseConstant, ToyKind::PiecewiseSmooth] {
            let b = toy_design(kind);
            for k in 0..15 {
                for (i, j) in [(0, k), (14, k), (k, 0), (k, 14)] {
                    assert_eq!(b[i + 15 * j], 0.0, "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn empty_generation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = make_setting(1, 15, 15, None, 80, &mut rng).unwrap();
        let d = generate(&s.fields, 0, 1.0, &mut rng);
        assert!(d.x.is_empty() && d.y.is_empty());
    }
}
