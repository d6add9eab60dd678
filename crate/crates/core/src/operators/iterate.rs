//! Discrete-time iteration `p_{t+1} = O[p_t]` with per-step diagnostics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ModelKind, Operators};
use crate::dist::{Density, GammaParams};
use crate::error::{check_positive, Error, Result};
use crate::laplace::{d_alpha, SGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub m1: f64,
    pub m_alpha: f64,
    /// KS distance to the previous iterate; `None` at `t = 0`.
    pub ks_consecutive: Option<f64>,
    /// KS distance to the closed-form equilibrium, when the model has one.
    pub ks_to_target: Option<f64>,
    pub d_alpha_to_target: Option<f64>,
    pub mass_leak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub model: ModelKind,
    pub alpha: f64,
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
}

impl IterationTrace {
    /// Number of operator applications performed.
    pub fn steps(&self) -> usize {
        self.records.last().map_or(0, |r| r.t)
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial record")
    }

    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        fn opt(v: Option<f64>) -> String {
            v.map(|v| format!("{v:.16e}")).unwrap_or_default()
        }
        writeln!(out, "t,m1,m_alpha,ks_consecutive,ks_to_target,mass_leak")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{},{},{:.16e}",
                r.t,
                r.m1,
                r.m_alpha,
                opt(r.ks_consecutive),
                opt(r.ks_to_target),
                r.mass_leak
            )?;
        }
        out.flush()
    }
}

/// Configurable iteration driver.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub model: ModelKind,
    pub max_steps: usize,
    pub stop_tol: f64,
    /// Order of the tracked moment `M_α`.
    pub alpha: f64,
    /// Largest cumulative mass leak tolerated before giving up.
    pub leak_limit: f64,
    pub operators: Operators,
    /// When set, `d_α` to the closed-form equilibrium is recorded as well.
    pub d_alpha_grid: Option<SGrid>,
}

impl Evolution {
    pub const DEFAULT_LEAK_LIMIT: f64 = 0.01;

    pub fn new(model: ModelKind, max_steps: usize, stop_tol: f64) -> Result<Self> {
        model.validate()?;
        check_positive("stop_tol", stop_tol)?;
        Ok(Evolution {
            model,
            max_steps,
            stop_tol,
            alpha: 1.5,
            leak_limit: Self::DEFAULT_LEAK_LIMIT,
            operators: Operators::default(),
            d_alpha_grid: None,
        })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        self.alpha = alpha;
        Ok(self)
    }

    pub fn with_operators(mut self, operators: Operators) -> Self {
        self.operators = operators;
        self
    }

    pub fn with_d_alpha(mut self, sgrid: SGrid) -> Self {
        self.d_alpha_grid = Some(sgrid);
        self
    }

    pub fn with_leak_limit(mut self, limit: f64) -> Result<Self> {
        check_positive("leak_limit", limit)?;
        self.leak_limit = limit;
        Ok(self)
    }

    pub fn run(&self, p0: &Density) -> Result<(Density, IterationTrace)> {
        self.run_observed(p0, |_, _| {})
    }

    /// Like [`run`](Self::run), calling `observe` with every iterate
    /// (including `p0`) and its record.
    pub fn run_observed(
        &self,
        p0: &Density,
        mut observe: impl FnMut(&Density, &TraceRecord),
    ) -> Result<(Density, IterationTrace)> {
        let target = Target::new(self.model.equilibrium(p0.mean()), p0)?;
        let mut records = Vec::new();
        let mut p = p0.clone();
        let first = self.record(0, &p, None, &target)?;
        self.check_leak(&first)?;
        observe(&p, &first);
        records.push(first);
        let mut stop = StopReason::MaxSteps;
        for t in 1..=self.max_steps {
            let next = self.operators.apply(&p, self.model)?;
            let ks = shape_ks(&p, &next);
            p = next;
            let rec = self.record(t, &p, Some(ks), &target)?;
            self.check_leak(&rec)?;
            observe(&p, &rec);
            records.push(rec);
            if ks < self.stop_tol {
                stop = StopReason::Converged;
                break;
            }
        }
        let trace = IterationTrace {
            model: self.model,
            alpha: self.alpha,
            records,
            stop,
        };
        Ok((p, trace))
    }

    fn record(
        &self,
        t: usize,
        p: &Density,
        ks_consecutive: Option<f64>,
        target: &Target,
    ) -> Result<TraceRecord> {
        let d_alpha_to_target = match (&self.d_alpha_grid, &target.density) {
            (Some(sgrid), Some(q)) if self.alpha > 1.0 && self.alpha < 2.0 => {
                Some(d_alpha(p, q, self.alpha, sgrid)?)
            }
            _ => None,
        };
        Ok(TraceRecord {
            t,
            m1: p.mean(),
            m_alpha: p.moment(self.alpha),
            ks_consecutive,
            ks_to_target: target.ks(p),
            d_alpha_to_target,
            mass_leak: p.mass_leak(),
        })
    }

    fn check_leak(&self, r: &TraceRecord) -> Result<()> {
        if r.mass_leak > self.leak_limit {
            return Err(Error::Truncation(format!(
                "cumulative mass leak {:.3e} exceeds {:.3e} at step {}; increase x_max",
                r.mass_leak, self.leak_limit, r.t
            )));
        }
        Ok(())
    }
}

/// KS distance between the distributions of two densities on the same grid
/// conditioned on the grid. A steady loss of tail mass past `x_max` would
/// otherwise put a floor of one step's leak under the distance.
fn shape_ks(p: &Density, q: &Density) -> f64 {
    let dx = p.grid().dx();
    let (mut a, mut b, mut sup) = (0.0, 0.0, 0.0f64);
    for (x, y) in p.values().iter().zip(q.values()) {
        a += x * dx;
        b += y * dx;
        sup = sup.max((a - b).abs());
    }
    sup
}

/// Closed-form equilibrium CDF at the cell edges, where the CDF of a grid
/// density is exact. Inside a cell the grid CDF is linear, which cannot
/// follow the `√x` start of a Gamma(1/2) CDF in the first cell.
struct Target {
    edges: Vec<f64>,
    density: Option<Density>,
}

impl Target {
    fn new(params: Option<GammaParams>, p0: &Density) -> Result<Self> {
        let Some(g) = params else {
            return Ok(Target {
                edges: Vec::new(),
                density: None,
            });
        };
        let grid = p0.grid();
        Ok(Target {
            edges: grid.edges().map(|x| g.cdf(x)).collect(),
            density: Density::gamma(*grid, g).ok(),
        })
    }

    fn ks(&self, p: &Density) -> Option<f64> {
        if self.edges.is_empty() {
            return None;
        }
        let sup = p
            .cumulative()
            .iter()
            .zip(&self.edges)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Some(sup)
    }
}

/// Iterates `model` from `p0` until consecutive iterates are within
/// `stop_tol` in KS distance or `max_steps` applications have been made.
pub fn iterate(
    p0: &Density,
    model: ModelKind,
    max_steps: usize,
    stop_tol: f64,
) -> Result<(Density, IterationTrace)> {
    Evolution::new(model, max_steps, stop_tol)?.run(p0)
}
