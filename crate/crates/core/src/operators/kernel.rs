//! Discrete building blocks of the density operators.
//!
//! A grid density is piecewise constant on cells. The S image of such a
//! density is computed exactly and then averaged back onto the cells: cell
//! `j` feeds every lower cell `k < j` with weight `∫_cell_j du/u =
//! ln((j+1)/j)` and feeds itself with `1 - j ln((j+1)/j)`. The convolution of
//! two piecewise-constant densities is also taken exactly: the pair of cells
//! `(i, j)` produces a triangle on `[(i+j) dx, (i+j+2) dx]` that puts half
//! its mass into each of cells `i+j` and `i+j+1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Grid;

/// How the sum of two cell positions is mapped back onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolutionRule {
    /// Split each pair evenly between the two cells its sum straddles.
    /// Exact for piecewise-constant densities and mean preserving.
    #[default]
    CellSplit,
    /// Assign each pair to a single node (`i + j`). Biases the mean low by
    /// `dx/2` per convolution.
    NearestNode,
}

/// Mass a source cell `j` sends to every cell strictly below it.
#[inline]
pub(crate) fn lower_weight(j: usize) -> f64 {
    if j == 0 {
        0.0
    } else {
        (1.0 / j as f64).ln_1p()
    }
}

/// Mass a source cell keeps in itself.
#[inline]
pub(crate) fn self_weight(j: usize) -> f64 {
    if j == 0 {
        1.0
    } else {
        1.0 - j as f64 * (1.0 / j as f64).ln_1p()
    }
}

/// Cell averages of `S[p](x) = ∫_x^∞ p(u)/u du` by a reverse cumulative sum.
pub(crate) fn s_transform(values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let mut above = 0.0;
    for (k, (&p, o)) in values.iter().zip(out.iter_mut()).enumerate().rev() {
        *o = above + p * self_weight(k);
        above += p * lower_weight(k);
    }
    out
}

/// Convolution of two cell-average vectors on `grid`, truncated to the grid.
/// Returns the truncated result and the mass that fell past `x_max`.
pub(crate) fn convolve(a: &[f64], b: &[f64], grid: &Grid, rule: ConvolutionRule) -> (Vec<f64>, f64) {
    let n = grid.len();
    let dx = grid.dx();
    // raw[m] = Σ_{i+j=m} a_i b_j dx; each entry is summed in a fixed order so
    // the result does not depend on how rayon schedules the outputs.
    let raw: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|m| {
            a[..=m]
                .iter()
                .zip(b[..=m].iter().rev())
                .map(|(x, y)| x * y)
                .sum::<f64>()
                * dx
        })
        .collect();
    let out = match rule {
        ConvolutionRule::CellSplit => (0..n)
            .map(|k| 0.5 * (raw[k] + if k > 0 { raw[k - 1] } else { 0.0 }))
            .collect(),
        ConvolutionRule::NearestNode => raw,
    };
    let total = a.iter().sum::<f64>() * b.iter().sum::<f64>() * dx * dx;
    let kept = out.iter().sum::<f64>() * dx;
    (out, (total - kept).max(0.0))
}

/// Tilts normalized `values` by `1 + c (x - mean)` so the mean becomes
/// `target` while the mass stays one.
pub(crate) fn restore_mean(values: &mut [f64], grid: &Grid, target: f64) {
    let dx = grid.dx();
    let (mut m0, mut m1) = (0.0, 0.0);
    for (x, v) in grid.nodes().zip(values.iter()) {
        m0 += v * dx;
        m1 += x * v * dx;
    }
    let mean = m1 / m0;
    let var = grid
        .nodes()
        .zip(values.iter())
        .map(|(x, v)| (x - mean) * (x - mean) * v * dx)
        .sum::<f64>()
        / m0;
    if !(var > 0.0) {
        return;
    }
    let c = (target - mean) / var;
    for (x, v) in grid.nodes().zip(values.iter_mut()) {
        *v *= (1.0 + c * (x - mean)).max(0.0);
    }
}
