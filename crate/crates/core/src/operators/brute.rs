//! Direct evaluation of
//! `T[p](x) = ∫_0^x ∫_y^∞ ∫_{x-y}^∞ p(u)/u · p(v)/v dv du dy`
//! without factoring through `S[p]` or a convolution routine.
//!
//! For each output cell the outer `y` integral is split over pairs of cells,
//! and both inner integrals are recomputed from scratch for every pair. The
//! cost is `O(n³)`, so this only serves as an independent check of
//! [`Operators::t`](super::Operators::t) on small grids.

use crate::dist::{Density, Grid};
use crate::error::{Error, Result};

use super::{ConvolutionRule, Operators};

/// Cost guard for [`brute_force_t`].
pub const BRUTE_FORCE_MAX_CELLS: usize = 1024;

/// Cell average over cell `a` of `y ↦ ∫_y^∞ 1{u ∈ cell j} / u du`.
fn inner_kernel(grid: &Grid, a: usize, j: usize) -> f64 {
    let lo = grid.edge(j);
    let hi = grid.edge(j + 1);
    if j > a {
        return hi.ln() - lo.ln();
    }
    if j < a {
        return 0.0;
    }
    // (1/dx) ∫_lo^hi ln(hi/y) dy = (1/dx) [(hi - lo) - lo ln(hi/lo)]
    let log_term = if lo == 0.0 { 0.0 } else { lo * (hi / lo).ln() };
    (hi - lo - log_term) / grid.dx()
}

/// Fraction of the mass of the cell-pair sum `(i, j)`, with `i + j = m`,
/// that lands in output cell `k`.
fn pair_overlap(rule: ConvolutionRule, m: usize, k: usize) -> f64 {
    match rule {
        ConvolutionRule::NearestNode => f64::from(u8::from(m == k)),
        ConvolutionRule::CellSplit => {
            // The sum of two uniforms on unit cells i and j is a triangle on
            // [m, m + 2] peaked at m + 1; integrate it over [k, k + 1].
            let ramp = |t: f64| -> f64 {
                let t = t - m as f64;
                match t {
                    t if t <= 0.0 => 0.0,
                    t if t <= 1.0 => 0.5 * t * t,
                    t if t <= 2.0 => 1.0 - 0.5 * (2.0 - t) * (2.0 - t),
                    _ => 1.0,
                }
            };
            ramp(k as f64 + 1.0) - ramp(k as f64)
        }
    }
}

/// `T[p]` by direct quadrature, refusing grids above
/// [`BRUTE_FORCE_MAX_CELLS`].
pub fn brute_force_t(p: &Density) -> Result<Density> {
    Operators::default().brute_force_t(p)
}

impl Operators {
    pub fn brute_force_t(&self, p: &Density) -> Result<Density> {
        let grid = *p.grid();
        let n = grid.len();
        if n > BRUTE_FORCE_MAX_CELLS {
            return Err(Error::parameter(
                "n",
                format!("brute-force T is O(n³); refusing n = {n} > {BRUTE_FORCE_MAX_CELLS}"),
            ));
        }
        let dx = grid.dx();
        let values = p.values();
        let inner = |a: usize| -> f64 {
            (a..n).map(|j| values[j] * inner_kernel(&grid, a, j)).sum()
        };

        let mut out = vec![0.0; n];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for m in k.saturating_sub(1)..=k {
                let weight = pair_overlap(self.convolution, m, k);
                if weight == 0.0 {
                    continue;
                }
                for a in 0..=m {
                    acc += weight * inner(m - a) * inner(a) * dx;
                }
            }
            *slot = acc;
        }
        Ok(super::finish(p, out, p.mass_leak(), self.mean_target(p)))
    }
}
