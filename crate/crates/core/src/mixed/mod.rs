//! Analytics of the mixed model's equilibrium.
//!
//! With `h(s) = (1/s) ∫_0^s p̂`, the equilibrium satisfies
//! `(1 - h)^(2-μ) = C s^(2-μ) h²` where the mean fixes `C = (w/2)^(2-μ)`.
//! Everything here works with `g = 1 - h`, which solves the equivalent and
//! better conditioned `g = (w s / 2) (1 - g)^(2/(2-μ))`.

mod moments;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, Error, Result};

pub use moments::{
    fourth_moment_gap, gamma_fit_two_moments, gamma_moment, heinsalu_shape, mixed_moment,
    moment_table, write_moment_table, MomentRow,
};

/// Parameters of the implicit equilibrium equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedEquilibriumSpec {
    mu: f64,
    w: f64,
    c: f64,
}

impl MixedEquilibriumSpec {
    pub fn new(mu: f64, w: f64) -> Result<Self> {
        check_probability(mu)?;
        check_positive("w", w)?;
        Ok(MixedEquilibriumSpec {
            mu,
            w,
            c: (0.5 * w).powf(2.0 - mu),
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    /// The integration constant `C = (w/2)^(2-μ)`.
    pub fn constant(&self) -> f64 {
        self.c
    }
}

fn check_rate(s: f64) -> Result<()> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::parameter("s", format!("{s} must be finite and >= 0")));
    }
    Ok(())
}

/// `g(s) = 1 - h(s)` to full double precision (relative to `g`).
fn solve_g(spec: &MixedEquilibriumSpec, s: f64) -> Result<f64> {
    let a = 0.5 * spec.w * s;
    if a == 0.0 {
        return Ok(0.0);
    }
    let q = 2.0 / (2.0 - spec.mu);
    let f = |g: f64| g - a * (1.0 - g).powf(q);
    // 0 < g <= min(a, 1) and, for a < 1, g >= a (1 - a)^q.
    let mut hi = a.min(1.0);
    let mut lo = if a < 1.0 { a * (1.0 - a).powf(q) } else { 0.0 };
    if !(f(lo) <= 0.0 && f(hi) >= 0.0) {
        return Err(Error::Internal(format!(
            "root of the equilibrium equation not bracketed at s = {s}"
        )));
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(if f(hi).abs() < f(lo).abs() { hi } else { lo })
}

/// Root `h ∈ (0, 1]` of `(1-h)^(2-μ) = C s^(2-μ) h²`.
pub fn solve_h(spec: &MixedEquilibriumSpec, s: f64) -> Result<f64> {
    check_rate(s)?;
    Ok(1.0 - solve_g(spec, s)?)
}

/// `p̂(s) = s h'(s) + h(s)`, with `h'` taken from the differential equation
/// `h' = ((2-μ)/s) (h-1) h / (2 - μh)`.
pub fn phat_mixed(spec: &MixedEquilibriumSpec, s: f64) -> Result<f64> {
    check_rate(s)?;
    let g = solve_g(spec, s)?;
    let h = 1.0 - g;
    Ok(h - (2.0 - spec.mu) * g * h / (2.0 - spec.mu * h))
}

/// `M_k = (-1)^k (k+1) h^(k)(0)`, with the derivative estimated from values
/// of `h` near zero by forward differences and Richardson extrapolation.
/// An independent check of [`mixed_moment`].
pub fn moment_from_transform(spec: &MixedEquilibriumSpec, k: u32) -> Result<f64> {
    if !(1..=4).contains(&k) {
        return Err(Error::parameter("k", format!("{k} is not in 1..=4")));
    }
    const LEVELS: usize = 7;
    let s0 = 0.05 / spec.w;
    let mut table = [[0.0f64; LEVELS]; LEVELS];
    for j in 0..LEVELS {
        let delta = s0 / (1u32 << j) as f64;
        // k-th forward difference of g at 0 (g(0) = 0).
        let mut diff = 0.0;
        for i in 0..=k {
            let binom = binomial(k, i);
            let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
            diff += sign * binom * solve_g(spec, i as f64 * delta)?;
        }
        table[j][0] = diff / delta.powi(k as i32);
        for m in 1..=j {
            let f = (1u64 << m) as f64;
            table[j][m] = (f * table[j][m - 1] - table[j - 1][m - 1]) / (f - 1.0);
        }
    }
    // Round-off grows at the finest steps, so take the diagonal entry that
    // changed least from its predecessor.
    let (change, best) = (1..LEVELS)
        .map(|j| ((table[j][j] - table[j - 1][j - 1]).abs(), table[j][j]))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("several levels");
    if !best.is_finite() || change > 1e-6 * best.abs().max(1e-300) {
        return Err(Error::NumericInstability(format!(
            "derivative {k} of h at 0 did not settle (last change {change:e}, estimate {best})"
        )));
    }
    // h^(k) = -g^(k)
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Ok(-sign * (k + 1) as f64 * best)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_follows_mean() {
        let spec = MixedEquilibriumSpec::new(0.0, 1.0).unwrap();
        assert_eq!(spec.constant(), 0.25);
        assert!(MixedEquilibriumSpec::new(1.5, 1.0).is_err());
        assert!(MixedEquilibriumSpec::new(0.5, 0.0).is_err());
    }

    #[test]
    fn h_closed_forms() {
        let ie = MixedEquilibriumSpec::new(0.0, 1.0).unwrap();
        let h = solve_h(&ie, 2.0).unwrap();
        assert!((h - 0.5).abs() < 1e-12);
        assert!(((1.0 - h).powi(2) - 0.25 * 4.0 * h * h).abs() < 1e-12);
        let drm = MixedEquilibriumSpec::new(1.0, 1.0).unwrap();
        // 1 - h = 2h² at s = 4, and h = (√(1+2s) - 1)/s from p̂ = (1+2s)^(-1/2).
        let h = solve_h(&drm, 4.0).unwrap();
        assert!((h - 0.5).abs() < 1e-12);
        assert!(((1.0 - h) - 2.0 * h * h).abs() < 1e-12);
        for mu in [0.0, 0.3, 1.0] {
            let spec = MixedEquilibriumSpec::new(mu, 2.0).unwrap();
            assert_eq!(solve_h(&spec, 0.0).unwrap(), 1.0);
        }
        assert!(solve_h(&ie, -1.0).is_err());
        assert!(solve_h(&ie, f64::NAN).is_err());
    }

    #[test]
    fn h_is_strictly_decreasing() {
        let spec = MixedEquilibriumSpec::new(0.4, 1.0).unwrap();
        let mut prev = 1.0;
        for i in 1..400 {
            let s = 1e-3 * 1.05f64.powi(i);
            let h = solve_h(&spec, s).unwrap();
            assert!(h < prev && h > 0.0);
            prev = h;
        }
    }

    #[test]
    fn transform_closed_forms() {
        let ie = MixedEquilibriumSpec::new(0.0, 1.0).unwrap();
        assert!((phat_mixed(&ie, 2.0).unwrap() - 0.25).abs() < 1e-12);
        let drm = MixedEquilibriumSpec::new(1.0, 1.0).unwrap();
        for s in [0.01f64, 1.0, 30.0] {
            let exact = (1.0 + 2.0 * s).powf(-0.5);
            assert!((phat_mixed(&drm, s).unwrap() - exact).abs() < 1e-9);
        }
        let mixed = MixedEquilibriumSpec::new(0.5, 1.0).unwrap();
        let s = 1e-7;
        let slope = (phat_mixed(&mixed, s).unwrap() - 1.0) / s;
        assert!((slope + 1.0).abs() < 1e-5, "{slope}");
    }

    #[test]
    fn transform_route_reproduces_low_moments() {
        let spec = MixedEquilibriumSpec::new(0.5, 1.0).unwrap();
        assert!((moment_from_transform(&spec, 1).unwrap() - 1.0).abs() < 1e-6);
        assert!((moment_from_transform(&spec, 2).unwrap() - 2.0).abs() < 1e-4);
        let ie = MixedEquilibriumSpec::new(0.0, 1.0).unwrap();
        assert!((moment_from_transform(&ie, 4).unwrap() - 7.5).abs() < 1e-3);
        assert!(moment_from_transform(&ie, 5).is_err());
        assert!(moment_from_transform(&ie, 0).is_err());
    }
}
