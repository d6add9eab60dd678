//! Laplace transforms of grid densities, the `d_α` metric on equal-mean
//! densities, contraction diagnostics and transform-space fixed-point
//! residuals.

mod quad;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Density;
use crate::error::{check_positive, Error, Result};
use crate::operators::{ModelKind, Operators};

/// Log-spaced transform variables used to approximate `sup_{s>0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SGrid {
    s_min: f64,
    s_max: f64,
    m: usize,
}

impl SGrid {
    pub const MIN_POINTS: usize = 32;
    pub const DEFAULT_POINTS: usize = 256;

    pub fn new(s_min: f64, s_max: f64, m: usize) -> Result<Self> {
        check_positive("s_min", s_min)?;
        check_positive("s_max", s_max)?;
        if s_max <= s_min {
            return Err(Error::parameter("s_max", format!("{s_max} <= s_min = {s_min}")));
        }
        if m < Self::MIN_POINTS {
            return Err(Error::parameter(
                "m",
                format!("need at least {} points, got {m}", Self::MIN_POINTS),
            ));
        }
        Ok(SGrid { s_min, s_max, m })
    }

    /// `[1e-3/w, 1e3/w]` with 256 points.
    pub fn for_mean(w: f64) -> Result<Self> {
        check_positive("w", w)?;
        SGrid::new(1e-3 / w, 1e3 / w, Self::DEFAULT_POINTS)
    }

    /// Same range, `m` points.
    pub fn with_points(&self, m: usize) -> Result<Self> {
        SGrid::new(self.s_min, self.s_max, m)
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn points(&self) -> Vec<f64> {
        let ratio = (self.s_max / self.s_min).ln() / (self.m - 1) as f64;
        (0..self.m)
            .map(|i| {
                if i + 1 == self.m {
                    self.s_max
                } else {
                    self.s_min * (ratio * i as f64).exp()
                }
            })
            .collect()
    }
}

/// Transform values of one density on an [`SGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEval {
    pub s_values: Vec<f64>,
    pub phat_values: Vec<f64>,
    pub source: Option<String>,
}

impl LaplaceEval {
    pub fn new(p: &Density, sgrid: &SGrid, source: Option<String>) -> Self {
        let s_values = sgrid.points();
        let phat_values = s_values.par_iter().map(|&s| laplace(p, s)).collect();
        LaplaceEval {
            s_values,
            phat_values,
            source,
        }
    }
}

/// `∫_0^∞ e^(-sx) p(x) dx` for the piecewise-constant density.
///
/// Each cell contributes `p_k ∫_cell e^(-sx) dx`, which reduces to the
/// midpoint rule `p_k e^(-s x_k) dx` when `s dx` is small and stays exact
/// when it is not.
pub fn laplace(p: &Density, s: f64) -> f64 {
    let grid = p.grid();
    let dx = grid.dx();
    let cell = if s == 0.0 { dx } else { -(-s * dx).exp_m1() / s };
    p.values()
        .iter()
        .enumerate()
        .map(|(k, v)| v * (-s * grid.edge(k)).exp())
        .sum::<f64>()
        * cell
}

/// `L[S[p]](s) = (1/s) ∫_0^s p̂`, integrating `p̂` adaptively.
pub fn laplace_of_s(p: &Density, s: f64) -> Result<f64> {
    check_positive("s", s)?;
    let integral = quad::adaptive_simpson(&|t| laplace(p, t), 0.0, s, 1e-11 * s.max(1.0));
    Ok(integral / s)
}

/// `p̂(s)` and the running average `h(s) = (1/s) ∫_0^s p̂` on `sgrid`.
pub fn transform_with_average(p: &Density, sgrid: &SGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let s = sgrid.points();
    let phat: Vec<f64> = s.par_iter().map(|&x| laplace(p, x)).collect();
    let integrals = quad::cumulative_simpson(&s, &|x| laplace(p, x));
    let h = integrals.iter().zip(&s).map(|(i, s)| i / s).collect();
    (s, phat, h)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::parameter("alpha", format!("{alpha} is not in (1, 2)")));
    }
    Ok(())
}

/// `sup_s |p̂(s) - q̂(s)| / s^α` over the points of `sgrid`, a lower bound for
/// the supremum over all `s > 0`. The metric is only finite for equal means.
pub fn d_alpha(p: &Density, q: &Density, alpha: f64, sgrid: &SGrid) -> Result<f64> {
    check_alpha(alpha)?;
    let (mp, mq) = (p.mean(), q.mean());
    if (mp - mq).abs() > 1e-3 * mp.max(mq) {
        return Err(Error::Precondition(format!(
            "d_alpha needs equal means, got {mp} and {mq}"
        )));
    }
    let d = sgrid
        .points()
        .par_iter()
        .map(|&s| (laplace(p, s) - laplace(q, s)).abs() / s.powf(alpha))
        .reduce(|| 0.0, f64::max);
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub pair_id: usize,
    pub t: usize,
    pub d_alpha: f64,
    /// `d_t / d_{t-1}`; `None` at `t = 0` or when the previous distance is zero.
    pub ratio: Option<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionTable {
    pub alpha: f64,
    pub rows: Vec<ContractionRow>,
}

impl ContractionTable {
    /// `2 / (α + 1)`.
    pub fn bound(&self) -> f64 {
        2.0 / (self.alpha + 1.0)
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.ratio).reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "pair_id,t,d_alpha_t,ratio,bound")?;
        for r in &self.rows {
            let ratio = r.ratio.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(out, "{},{},{:.16e},{},{:.16e}", r.pair_id, r.t, r.d_alpha, ratio, r.bound)?;
        }
        out.flush()
    }
}

/// Iterates `T` on each pair and records `d_α` and its step-to-step ratio.
pub fn contraction_study(
    pairs: &[(Density, Density)],
    alpha: f64,
    steps: usize,
    sgrid: &SGrid,
) -> Result<ContractionTable> {
    check_alpha(alpha)?;
    let ops = Operators::default();
    let bound = 2.0 / (alpha + 1.0);
    let mut rows = Vec::with_capacity(pairs.len() * (steps + 1));
    for (pair_id, (p0, q0)) in pairs.iter().enumerate() {
        let (mut p, mut q) = (p0.clone(), q0.clone());
        let mut prev: Option<f64> = None;
        for t in 0..=steps {
            if t > 0 {
                p = ops.t(&p);
                q = ops.t(&q);
            }
            let d = d_alpha(&p, &q, alpha, sgrid)?;
            let ratio = prev.filter(|v| *v > 0.0).map(|v| d / v);
            rows.push(ContractionRow {
                pair_id,
                t,
                d_alpha: d,
                ratio,
                bound,
            });
            prev = Some(d);
        }
    }
    Ok(ContractionTable { alpha, rows })
}

/// `sup_s |p̂(s) - RHS(s)|` where RHS is the transformed day operator of
/// `model` written in terms of `p̂` and `h(s) = (1/s)∫_0^s p̂`:
/// `h²` for Immediate Exchange, `½ (p̂ + 1) h` for the Directed Random Market
/// and their `μ`-mixture otherwise.
pub fn fixed_point_residual(p: &Density, model: ModelKind, sgrid: &SGrid) -> Result<f64> {
    model.validate()?;
    let mu = model.directed_probability();
    let (_, phat, h) = transform_with_average(p, sgrid);
    let sup = phat
        .iter()
        .zip(&h)
        .map(|(&ph, &h)| {
            let rhs = mu * 0.5 * (ph + 1.0) * h + (1.0 - mu) * h * h;
            (ph - rhs).abs()
        })
        .fold(0.0, f64::max);
    Ok(sup)
}
