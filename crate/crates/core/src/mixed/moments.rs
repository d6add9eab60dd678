//! Closed-form moments of the mixed equilibrium and its Gamma fits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dist::GammaParams;
use crate::error::{check_positive, check_probability, Error, Result};

/// `M_k` of the mixed equilibrium with mean `w`, for `k = 1..=4`.
pub fn mixed_moment(mu: f64, w: f64, k: u32) -> Result<f64> {
    check_probability(mu)?;
    check_positive("w", w)?;
    let d = 2.0 - mu;
    let v = match k {
        1 => 1.0,
        2 => 3.0 / d,
        3 => 3.0 * (4.0 + mu) / (d * d),
        4 => 5.0 * (mu * mu + 8.0 * mu + 12.0) / (d * d * d),
        _ => return Err(Error::parameter("k", format!("{k} is not in 1..=4"))),
    };
    Ok(v * w.powi(k as i32))
}

/// `β^k ∏_{j<k} (α + j)`.
pub fn gamma_moment(params: &GammaParams, k: u32) -> f64 {
    params.moment(k)
}

/// The Gamma distribution matching the first two moments of the mixed
/// equilibrium: shape `(2-μ)/(1+μ)`, scale `(1+μ) w / (2-μ)`.
pub fn gamma_fit_two_moments(mu: f64, w: f64) -> Result<GammaParams> {
    check_probability(mu)?;
    check_positive("w", w)?;
    GammaParams::new((2.0 - mu) / (1.0 + mu), (1.0 + mu) * w / (2.0 - mu))
}

/// The empirical shape `2^(1-2μ)` proposed by Heinsalu and Patriarca.
pub fn heinsalu_shape(mu: f64) -> Result<f64> {
    check_probability(mu)?;
    Ok(2f64.powf(1.0 - 2.0 * mu))
}

/// `M_4(Gamma fit) - M_4(mixed) = μ(μ-1) w⁴ / (2-μ)³`.
pub fn fourth_moment_gap(mu: f64, w: f64) -> Result<f64> {
    check_probability(mu)?;
    check_positive("w", w)?;
    Ok(mu * (mu - 1.0) / (2.0 - mu).powi(3) * w.powi(4))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub mu: f64,
    pub k: u32,
    pub m_mixed: f64,
    pub m_gamma_fit: f64,
    /// `m_gamma_fit - m_mixed`.
    pub gap: f64,
    pub alpha_fit: f64,
    pub alpha_heinsalu: f64,
}

/// Moments `k = 1..=4` of the mixed equilibrium and its two-moment Gamma fit
/// for each `μ`.
pub fn moment_table(mus: &[f64], w: f64) -> Result<Vec<MomentRow>> {
    let mut rows = Vec::with_capacity(4 * mus.len());
    for &mu in mus {
        let fit = gamma_fit_two_moments(mu, w)?;
        let alpha_heinsalu = heinsalu_shape(mu)?;
        for k in 1..=4 {
            let m_mixed = mixed_moment(mu, w, k)?;
            let m_gamma_fit = gamma_moment(&fit, k);
            rows.push(MomentRow {
                mu,
                k,
                m_mixed,
                m_gamma_fit,
                gap: m_gamma_fit - m_mixed,
                alpha_fit: fit.shape(),
                alpha_heinsalu,
            });
        }
    }
    Ok(rows)
}

pub fn write_moment_table<W: Write>(rows: &[MomentRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "mu,k,M_mixed,M_gamma_fit,gap,alpha_fit,alpha_heinsalu")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.mu, r.k, r.m_mixed, r.m_gamma_fit, r.gap, r.alpha_fit, r.alpha_heinsalu
        )?;
    }
    out.flush()
}
