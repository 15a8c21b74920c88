//! Normal distribution truncated to a bounded interval.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `N(mean, sd^2)` restricted to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

/// `P(lo <= Z <= hi)` for a standard normal `Z`, accurate in both tails.
pub fn std_normal_mass(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    if lo > 0.0 {
        0.5 * (erfc(lo * FRAC_1_SQRT_2) - erfc(hi * FRAC_1_SQRT_2))
    } else if hi < 0.0 {
        0.5 * (erfc(-hi * FRAC_1_SQRT_2) - erfc(-lo * FRAC_1_SQRT_2))
    } else {
        1.0 - 0.5 * (erfc(-lo * FRAC_1_SQRT_2) + erfc(hi * FRAC_1_SQRT_2))
    }
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        assert!(sd > 0.0 && lo < hi, "invalid truncated normal");
        Self { mean, sd, lo, hi }
    }

    /// Normalizing mass `P(lo <= X <= hi)` of the untruncated normal.
    pub fn mass(&self) -> f64 {
        std_normal_mass((self.lo - self.mean) / self.sd, (self.hi - self.mean) / self.sd)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - (self.sd * (2.0 * PI).sqrt()).ln() - self.mass().ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = (self.lo - self.mean) / self.sd;
        let b = (self.hi - self.mean) / self.sd;
        let z = if b <= 0.0 { -std_sample(-b, -a, rng) } else { std_sample(a, b, rng) };
        (self.mean + self.sd * z).clamp(self.lo, self.hi)
    }
}

/// Standard normal restricted to `[a, b]` with `b > 0`, by the rejection
/// schemes of Robert (1995): normal or uniform proposals when the interval
/// covers the mode, uniform or translated-exponential proposals in the tail.
fn std_sample<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        if b - a >= (2.0 * PI).sqrt() {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                if z >= a && z <= b {
                    return z;
                }
            }
        }
        loop {
            let z = rng.random_range(a..=b);
            if rng.random::<f64>().ln() <= -0.5 * z * z {
                return z;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let uniform_better =
        b - a <= ((a * a - a * (a * a + 4.0).sqrt()) / 4.0 + 0.5).exp() / rate;
    if uniform_better {
        loop {
            let z = rng.random_range(a..=b);
            if rng.random::<f64>().ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / rate;
        if z > b {
            continue;
        }
        if rng.random::<f64>().ln() <= -0.5 * (z - rate).powi(2) {
            return z;
        }
    }
}
