//! Infinite-population day operators acting on grid densities.
//!
//! * `S[p]`: density of `εW` for `W ~ p`, `ε ~ Uniform[0,1]`.
//! * `T[p] = S[p] * S[p]`: one day of Immediate Exchange.
//! * `T_D[p] = ½ (p * S[p]) + ½ S[p]`: one day of the Directed Random Market.
//! * `T_M[p] = μ T_D[p] + (1-μ) T[p]`: the mixed model.

mod brute;
mod iterate;
mod kernel;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{Density, GammaParams};
use crate::error::{check_probability, Error, Result};

pub use brute::{brute_force_t, BRUTE_FORCE_MAX_CELLS};
pub use iterate::{iterate, Evolution, IterationTrace, StopReason, TraceRecord};
pub use kernel::ConvolutionRule;

/// Which exchange rule drives the population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ImmediateExchange,
    DirectedRandomMarket,
    /// Directed transfer with probability `μ`, immediate exchange otherwise.
    Mixed(f64),
}

impl ModelKind {
    pub fn mixed(mu: f64) -> Result<Self> {
        check_probability(mu)?;
        Ok(ModelKind::Mixed(mu))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelKind::Mixed(mu) => check_probability(*mu),
            _ => Ok(()),
        }
    }

    /// Probability that an interaction is a directed transfer.
    pub fn directed_probability(&self) -> f64 {
        match self {
            ModelKind::ImmediateExchange => 0.0,
            ModelKind::DirectedRandomMarket => 1.0,
            ModelKind::Mixed(mu) => *mu,
        }
    }

    /// Closed-form equilibrium for mean wealth `w`, when one exists.
    pub fn equilibrium(&self, w: f64) -> Option<GammaParams> {
        let mu = self.directed_probability();
        if mu == 0.0 {
            GammaParams::immediate_exchange(w).ok()
        } else if mu == 1.0 {
            GammaParams::directed_market(w).ok()
        } else {
            None
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            ModelKind::ImmediateExchange => "ie",
            ModelKind::DirectedRandomMarket => "drm",
            ModelKind::Mixed(_) => "mixed",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Mixed(mu) => write!(f, "mixed:{mu}"),
            other => f.write_str(other.short_name()),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// Accepts `ie`, `drm`, `mixed:<mu>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ie" | "immediate" | "immediate-exchange" => Ok(ModelKind::ImmediateExchange),
            "drm" | "directed" | "directed-random-market" => Ok(ModelKind::DirectedRandomMarket),
            other => match other.strip_prefix("mixed:") {
                Some(mu) => {
                    let mu = mu
                        .parse::<f64>()
                        .map_err(|e| Error::parameter("mu", e.to_string()))?;
                    ModelKind::mixed(mu)
                }
                None => Err(Error::parameter("model", format!("unknown model `{s}`"))),
            },
        }
    }
}

/// Discretization options shared by all operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Operators {
    pub convolution: ConvolutionRule,
    /// Restore the input mean exactly after each application. The cell
    /// averaging of `S` shifts the mean by `O(dx²)` per step, which adds up
    /// over long iterations; the correction is a first-order tilt of the same
    /// size.
    pub conserve_mean: bool,
}

impl Default for Operators {
    fn default() -> Self {
        Operators {
            convolution: ConvolutionRule::CellSplit,
            conserve_mean: true,
        }
    }
}

impl Operators {
    /// Plain discretization without the mean correction.
    pub fn raw() -> Self {
        Operators {
            conserve_mean: false,
            ..Operators::default()
        }
    }

    pub fn s(&self, p: &Density) -> Density {
        let s = kernel::s_transform(p.values());
        finish(p, s, p.mass_leak(), None)
    }

    pub fn t(&self, p: &Density) -> Density {
        let grid = p.grid();
        let s = kernel::s_transform(p.values());
        let (conv, _) = kernel::convolve(&s, &s, grid, self.convolution);
        finish(p, conv, p.mass_leak(), self.mean_target(p))
    }

    pub fn td(&self, p: &Density) -> Density {
        let grid = p.grid();
        let s = kernel::s_transform(p.values());
        let (conv, _) = kernel::convolve(p.values(), &s, grid, self.convolution);
        let mixed = conv.iter().zip(&s).map(|(c, s)| 0.5 * c + 0.5 * s).collect();
        finish(p, mixed, p.mass_leak(), self.mean_target(p))
    }

    pub fn tm(&self, p: &Density, mu: f64) -> Result<Density> {
        check_probability(mu)?;
        if mu == 0.0 {
            return Ok(self.t(p));
        }
        if mu == 1.0 {
            return Ok(self.td(p));
        }
        let bi = self.t(p);
        let uni = self.td(p);
        let values = uni
            .values()
            .iter()
            .zip(bi.values())
            .map(|(u, b)| mu * u + (1.0 - mu) * b)
            .collect();
        let leak = mu * uni.mass_leak() + (1.0 - mu) * bi.mass_leak();
        Ok(finish(p, values, leak, None))
    }

    /// One day of `model`.
    pub fn apply(&self, p: &Density, model: ModelKind) -> Result<Density> {
        match model {
            ModelKind::ImmediateExchange => Ok(self.t(p)),
            ModelKind::DirectedRandomMarket => Ok(self.td(p)),
            ModelKind::Mixed(mu) => self.tm(p, mu),
        }
    }

    fn mean_target(&self, p: &Density) -> Option<f64> {
        self.conserve_mean.then(|| p.mean())
    }
}

/// Normalizes operator output and optionally pins its mean. The mass missing
/// from `values` is added to `prior_leak`.
fn finish(p: &Density, mut values: Vec<f64>, prior_leak: f64, mean: Option<f64>) -> Density {
    let grid = *p.grid();
    let out = Density::normalize(grid, values.clone(), prior_leak)
        .expect("operators map a density with mass to a density with mass");
    let Some(target) = mean else {
        return out;
    };
    let leak = out.mass_leak();
    values.copy_from_slice(out.values());
    kernel::restore_mean(&mut values, &grid, target);
    Density::normalize(grid, values, 0.0)
        .expect("tilt preserves mass")
        .with_leak(leak)
}

impl Density {
    /// Moves the mean to `target` with the tilt `p(x) (1 + c (x - m))`,
    /// keeping the mass and the leak. Meant for small corrections such as
    /// the mean lost to truncation; shifts above 1% are refused.
    pub fn with_mean(&self, target: f64) -> Result<Density> {
        crate::error::check_positive("target", target)?;
        let mean = self.mean();
        if (target - mean).abs() > 0.01 * mean {
            return Err(Error::parameter(
                "target",
                format!("{target} is more than 1% away from the mean {mean}"),
            ));
        }
        let mut values = self.values().to_vec();
        kernel::restore_mean(&mut values, self.grid(), target);
        Ok(Density::normalize(*self.grid(), values, 0.0)?.with_leak(self.mass_leak()))
    }
}

/// `S[p]` with default options.
pub fn apply_s(p: &Density) -> Density {
    Operators::default().s(p)
}

/// `T[p] = S[p] * S[p]` with default options.
pub fn apply_t(p: &Density) -> Density {
    Operators::default().t(p)
}

/// `T_D[p] = ½ (p * S[p]) + ½ S[p]` with default options.
pub fn apply_td(p: &Density) -> Density {
    Operators::default().td(p)
}

/// `T_M[p] = μ T_D[p] + (1 - μ) T[p]` with default options.
pub fn apply_tm(p: &Density, mu: f64) -> Result<Density> {
    Operators::default().tm(p, mu)
}
