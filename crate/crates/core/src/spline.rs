//! Centered orthonormal spline basis on `[0, 1]` with a diagonal curvature matrix.
//!
//! A raw B-spline basis `psi` of dimension `K + 1` is turned into `phi`
//! (dimension `K`) in three steps: orthonormalize with the Gram matrix
//! `W = int psi psi^T`, drop the constant direction, and diagonalize the
//! second-derivative Gram. The result satisfies `int phi = 0`,
//! `int phi phi^T = I` and `int phi'' phi''^T = diag(omega)` with `omega`
//! ascending and `omega[0] = 0`, so `phi_1` is affine.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FenError, Result};
use crate::quadrature::GaussRule;

/// Cubic B-splines.
pub const CUBIC_ORDER: usize = 4;
/// Smallest training size giving `K >= 2`.
pub const MIN_TRAIN: usize = 32;

const DOMAIN_TOL: f64 = 1e-12;
const MIN_KNOT_GAP: f64 = 1e-8;

/// Clamped B-spline basis on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBSpline {
    order: usize,
    interior: Vec<f64>,
    knots: Vec<f64>,
}

impl RawBSpline {
    pub fn new(order: usize, interior: Vec<f64>) -> Result<Self> {
        if order < 2 {
            return Err(FenError::InvalidParameter(format!("B-spline order {order} < 2")));
        }
        let mut prev = 0.0;
        for &k in interior.iter().chain(std::iter::once(&1.0)) {
            if !(k - prev >= MIN_KNOT_GAP) {
                return Err(FenError::DuplicateKnots(format!("{interior:?}")));
            }
            prev = k;
        }
        let mut knots = vec![0.0; order];
        knots.extend_from_slice(&interior);
        knots.extend(std::iter::repeat_n(1.0, order));
        Ok(Self { order, interior, knots })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    /// Number of basis functions, `order + #interior`.
    pub fn dim(&self) -> usize {
        self.order + self.interior.len()
    }

    /// Breakpoints `0 = b_0 < ... < b_m = 1` delimiting the polynomial pieces.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        b.extend_from_slice(&self.interior);
        b.push(1.0);
        b
    }

    /// `deriv`-th derivative of every basis function at `x in [0, 1]`.
    pub fn eval_deriv(&self, x: f64, deriv: usize, out: &mut [f64]) {
        let k = self.order;
        let t = &self.knots;
        let nb = self.dim();
        debug_assert_eq!(out.len(), nb);
        out.iter_mut().for_each(|v| *v = 0.0);
        if deriv >= k {
            return;
        }
        // Knot span index `s` with t[s] <= x < t[s+1], the last span is closed.
        let x = x.clamp(0.0, 1.0);
        let mut s = k - 1;
        while s + 1 < nb && x >= t[s + 1] {
            s += 1;
        }
        // table[j][i]: B_{s-j+i, j+1}(x), the order-(j+1) functions nonzero on span s.
        let mut table = vec![vec![0.0; k]; k];
        table[0][0] = 1.0;
        for j in 1..k {
            for i in 0..=j {
                let idx = s + i - j;
                let mut v = 0.0;
                if i > 0 {
                    let den = t[idx + j] - t[idx];
                    if den > 0.0 {
                        v += (x - t[idx]) / den * table[j - 1][i - 1];
                    }
                }
                if i < j {
                    let den = t[idx + j + 1] - t[idx + 1];
                    if den > 0.0 {
                        v += (t[idx + j + 1] - x) / den * table[j - 1][i];
                    }
                }
                table[j][i] = v;
            }
        }
        for i in 0..k {
            out[s + 1 - k + i] = self.deriv_rec(&table, s, k - 1, i, deriv);
        }
    }

    /// Derivative of order `m` of `B_{s-j+i, j+1}` from the lower-order table.
    fn deriv_rec(&self, table: &[Vec<f64>], s: usize, j: usize, i: usize, m: usize) -> f64 {
        if m == 0 {
            return table[j][i];
        }
        let t = &self.knots;
        let idx = s + i - j;
        let p = j as f64;
        let mut v = 0.0;
        if i > 0 {
            let den = t[idx + j] - t[idx];
            if den > 0.0 {
                v += p * self.deriv_rec(table, s, j - 1, i - 1, m - 1) / den;
            }
        }
        if i < j {
            let den = t[idx + j + 1] - t[idx + 1];
            if den > 0.0 {
                v -= p * self.deriv_rec(table, s, j - 1, i, m - 1) / den;
            }
        }
        v
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_deriv(x, 0, &mut out);
        out
    }
}

/// Integrals `W = int psi psi^T`, `m = int psi` and `S = int psi'' psi''^T` over `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GramMatrices {
    pub w: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub s: DMatrix<f64>,
}

/// Gram matrices by Gauss–Legendre quadrature on each knot span. `nodes` points
/// per span integrate products of two order-`k` splines exactly when
/// `2 * nodes - 1 >= 2 * (k - 1)`.
pub fn gram_matrices(raw: &RawBSpline, nodes: usize) -> GramMatrices {
    let n = raw.dim();
    let rule = GaussRule::new(nodes);
    let mut w = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    let mut mean = DVector::zeros(n);
    let mut v = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let bp = raw.breakpoints();
    for span in bp.windows(2) {
        for (x, wt) in rule.on(span[0], span[1]) {
            raw.eval_deriv(x, 0, &mut v);
            raw.eval_deriv(x, 2, &mut d2);
            for a in 0..n {
                mean[a] += wt * v[a];
                for b in 0..n {
                    w[(a, b)] += wt * v[a] * v[b];
                    s[(a, b)] += wt * d2[a] * d2[b];
                }
            }
        }
    }
    GramMatrices { w, mean, s }
}

/// Spline basis `phi = transform * psi` with curvature and roughness matrices.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    raw: RawBSpline,
    k: usize,
    transform: DMatrix<f64>,
    curvature: DMatrix<f64>,
    roughness: DMatrix<f64>,
    delta_prime: f64,
    norm_phi1_sq: f64,
}

/// Basis dimension `K = round(n^(1/5))`, ties to even.
pub fn basis_dimension(n_train: usize) -> usize {
    (n_train as f64).powf(0.2).round_ties_even() as usize
}

/// Spline order used for dimension `K`: cubic where the raw space `K + 1` allows it.
pub fn spline_order(k: usize) -> usize {
    CUBIC_ORDER.min(k + 1)
}

/// Type-7 sample quantile (linear interpolation between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Interior knots at equally spaced quantiles of the samples. The raw space
/// has dimension `order + #interior = K + 1`.
pub fn quantile_knots(samples: &[f64], k: usize) -> Result<Vec<f64>> {
    let order = spline_order(k);
    let n_interior = k + 1 - order;
    if n_interior == 0 {
        return Ok(Vec::new());
    }
    if samples.is_empty() {
        return Err(FenError::InvalidParameter("no covariate samples for knot placement".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((1..=n_interior)
        .map(|j| quantile_sorted(&sorted, j as f64 / (n_interior + 1) as f64))
        .collect())
}

fn knots_collapsed(knots: &[f64]) -> bool {
    let mut prev = 0.0;
    for &k in knots.iter().chain(std::iter::once(&1.0)) {
        if !(k - prev >= MIN_KNOT_GAP) {
            return true;
        }
        prev = k;
    }
    false
}

/// Spread tied knots apart by small deterministic offsets.
fn jitter_knots(knots: &[f64]) -> Vec<f64> {
    let m = knots.len() as f64;
    let mut out: Vec<f64> = knots
        .iter()
        .enumerate()
        .map(|(j, &k)| k + 1e-6 * (j as f64 - 0.5 * (m - 1.0)))
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Basis for a training set of size `n_train` with knots from pooled covariate samples.
pub fn build_basis(n_train: usize, samples: &[f64], delta_prime: f64) -> Result<SplineBasis> {
    if n_train < MIN_TRAIN {
        return Err(FenError::SampleTooSmall(n_train));
    }
    if let Some(&bad) = samples.iter().find(|v| !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(*v)) {
        return Err(FenError::Domain(bad));
    }
    let k = basis_dimension(n_train);
    let mut knots = quantile_knots(samples, k)?;
    if knots_collapsed(&knots) {
        knots = jitter_knots(&knots);
        if knots_collapsed(&knots) {
            return Err(FenError::DuplicateKnots(format!("{knots:?}")));
        }
    }
    SplineBasis::with_knots(k, knots, delta_prime)
}

impl SplineBasis {
    /// Basis of dimension `k` with the given interior knots (`k + 1 - order` of them).
    pub fn with_knots(k: usize, interior: Vec<f64>, delta_prime: f64) -> Result<Self> {
        if k < 2 {
            return Err(FenError::InvalidParameter(format!("basis dimension {k} < 2")));
        }
        if !(delta_prime > 0.0) {
            return Err(FenError::InvalidParameter(format!("delta' = {delta_prime}")));
        }
        let order = spline_order(k);
        if interior.len() != k + 1 - order {
            return Err(FenError::DimensionMismatch(format!(
                "K = {k} needs {} interior knots, got {}",
                k + 1 - order,
                interior.len()
            )));
        }
        let raw = RawBSpline::new(order, interior)?;
        let gram = gram_matrices(&raw, order);
        let n = k + 1;

        // Step 1: orthonormalize, psi_tilde = Gamma1^{-1/2} V^T psi.
        let eig_w = SymmetricEigen::new(gram.w.clone());
        if eig_w.eigenvalues.iter().any(|&g| !(g > 0.0)) {
            return Err(FenError::Numeric("B-spline Gram matrix is not positive definite".into()));
        }
        let mut a = eig_w.eigenvectors.transpose();
        for (i, mut row) in a.row_iter_mut().enumerate() {
            row /= eig_w.eigenvalues[i].sqrt();
        }

        // Step 2: remove the constant direction d = int psi_tilde.
        let d = &a * &gram.mean;
        let t = orthogonal_complement(&d);

        // Step 3: diagonalize the curvature Gram of phi_tilde = T^T psi_tilde.
        let b = t.transpose() * &a;
        let omega0 = &b * &gram.s * b.transpose();
        let omega0 = 0.5 * (&omega0 + omega0.transpose());
        let eig_o = SymmetricEigen::new(omega0);
        let mut order_idx: Vec<usize> = (0..k).collect();
        order_idx.sort_by(|&i, &j| eig_o.eigenvalues[i].total_cmp(&eig_o.eigenvalues[j]));
        let mut transform = DMatrix::zeros(k, n);
        let mut omega = Vec::with_capacity(k);
        for (row, &j) in order_idx.iter().enumerate() {
            let u = eig_o.eigenvectors.column(j);
            let mut r = u.transpose() * &b;
            let (imax, _) = r
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            if r[imax] < 0.0 {
                r.neg_mut();
            }
            transform.set_row(row, &r);
            omega.push(eig_o.eigenvalues[j].max(0.0));
        }
        omega[0] = 0.0;
        let curvature = DMatrix::from_diagonal(&DVector::from_vec(omega));
        let phi_gram = &transform * &gram.w * transform.transpose();
        let norm_phi1_sq = phi_gram[(0, 0)];
        let mut roughness = curvature.clone();
        roughness[(0, 0)] += delta_prime * norm_phi1_sq;
        Ok(Self { raw, k, transform, curvature, roughness, delta_prime, norm_phi1_sq })
    }

    /// Basis `phi_Q = Q phi` for an orthonormal `Q`, with `R_Q = Q R Q^T`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.nrows() != self.k || q.ncols() != self.k {
            return Err(FenError::DimensionMismatch(format!(
                "rotation is {}x{}, basis dimension {}",
                q.nrows(),
                q.ncols(),
                self.k
            )));
        }
        Ok(Self {
            raw: self.raw.clone(),
            k: self.k,
            transform: q * &self.transform,
            curvature: q * &self.curvature * q.transpose(),
            roughness: q * &self.roughness * q.transpose(),
            delta_prime: self.delta_prime,
            norm_phi1_sq: self.norm_phi1_sq,
        })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn raw(&self) -> &RawBSpline {
        &self.raw
    }

    pub fn interior_knots(&self) -> &[f64] {
        self.raw.interior_knots()
    }

    /// `K x (K + 1)` matrix mapping raw B-splines to `phi`.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    /// Curvature weights `omega_kk` (diagonal of the curvature matrix).
    pub fn omega(&self) -> Vec<f64> {
        self.curvature.diagonal().iter().copied().collect()
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }

    /// Roughness matrix `R = Omega + delta' ||phi_1||^2 e_1 e_1^T`.
    pub fn roughness(&self) -> &DMatrix<f64> {
        &self.roughness
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    pub fn norm_phi1_sq(&self) -> f64 {
        self.norm_phi1_sq
    }

    /// Write `phi(x)` into `out` without domain checks (`x` is clamped to `[0, 1]`).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        self.eval_deriv_into(x, 0, out);
    }

    pub fn eval_deriv_into(&self, x: f64, deriv: usize, out: &mut [f64]) {
        let mut psi = vec![0.0; self.k + 1];
        self.raw.eval_deriv(x, deriv, &mut psi);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..=self.k).map(|j| self.transform[(i, j)] * psi[j]).sum();
        }
    }

    /// `phi(x)`; values within 1e-12 outside `[0, 1]` are clamped.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&x) {
            return Err(FenError::Domain(x));
        }
        let mut out = vec![0.0; self.k];
        self.eval_into(x.clamp(0.0, 1.0), &mut out);
        Ok(out)
    }

    /// `phi(x)^T beta`.
    pub fn eval_function(&self, beta: &[f64], x: f64) -> f64 {
        let mut out = vec![0.0; self.k];
        self.eval_into(x, &mut out);
        out.iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    /// Reassemble a basis from stored components (used when reading fit files).
    pub fn from_parts(
        k: usize,
        interior: Vec<f64>,
        transform: DMatrix<f64>,
        roughness: DMatrix<f64>,
        delta_prime: f64,
    ) -> Result<Self> {
        let raw = RawBSpline::new(spline_order(k), interior)?;
        if transform.nrows() != k || transform.ncols() != raw.dim() {
            return Err(FenError::DimensionMismatch("spline transform shape".into()));
        }
        let mut curvature = roughness.clone();
        curvature[(0, 0)] -= delta_prime;
        Ok(Self { raw, k, transform, curvature, roughness, delta_prime, norm_phi1_sq: 1.0 })
    }
}

/// Columns of an orthonormal basis of the complement of `d`, via a Householder reflection.
fn orthogonal_complement(d: &DVector<f64>) -> DMatrix<f64> {
    let n = d.len();
    let norm = d.norm();
    let mut h = DMatrix::identity(n, n);
    if norm > 0.0 {
        let mut v = d.clone();
        v[0] += d[0].signum() * norm;
        if d[0] == 0.0 {
            v[0] = norm;
        }
        let vv = v.dot(&v);
        if vv > 0.0 {
            h -= (2.0 / vv) * &v * v.transpose();
        }
    }
    h.columns(1, n - 1).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_rule() {
        assert_eq!(basis_dimension(600), 4);
        assert_eq!(basis_dimension(32), 2);
        assert_eq!(basis_dimension(500), 3);
        assert_eq!(basis_dimension(60), 2);
    }

    #[test]
    fn small_sample_rejected() {
        assert_eq!(build_basis(20, &[0.5], 1e-4).unwrap_err(), FenError::SampleTooSmall(20));
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 1.0 / 3.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn partition_of_unity() {
        let raw = RawBSpline::new(4, vec![0.2, 0.5, 0.55]).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let s: f64 = raw.eval(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn duplicate_knots_rejected() {
        assert!(matches!(RawBSpline::new(4, vec![0.3, 0.3]), Err(FenError::DuplicateKnots(_))));
        assert!(RawBSpline::new(4, vec![0.0]).is_err());
    }

    #[test]
    fn tied_quantiles_are_jittered() {
        let mut samples = vec![0.5; 2000];
        samples.push(0.1);
        samples.push(0.9);
        let b = build_basis(3200, &samples, 1e-4).unwrap();
        assert_eq!(b.dim(), 5);
        let kn = b.interior_knots();
        assert!(kn[1] - kn[0] > 1e-8);
    }

    #[test]
    fn eval_domain() {
        let b = SplineBasis::with_knots(4, vec![0.5], 1e-4).unwrap();
        assert!(b.eval(1.0 + 1e-13).is_ok());
        assert!(matches!(b.eval(1.1), Err(FenError::Domain(_))));
        assert!(b.eval(-0.01).is_err());
    }

    #[test]
    fn roughness_adds_ridge_on_first_coordinate() {
        let b = SplineBasis::with_knots(5, vec![0.3, 0.7], 1e-4).unwrap();
        let r = b.roughness();
        let om = b.omega();
        assert!((r[(0, 0)] - 1e-4 * b.norm_phi1_sq()).abs() < 1e-12);
        assert!((b.norm_phi1_sq() - 1.0).abs() < 1e-10);
        for i in 1..5 {
            assert_eq!(r[(i, i)], om[i]);
        }
    }
}
