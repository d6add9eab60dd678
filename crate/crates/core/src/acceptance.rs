//! The acceptance suite: ten end-to-end checks of the engine, the metrics,
//! the mixed-model analytics and the simulator, with a machine-readable
//! report.

use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dist::{
    density_ks, ecdf, gamma2_equilibrium, gamma_half_equilibrium, ks_distance, Density,
    EmpiricalSample, GammaParams, Grid,
};
use crate::error::{Error, Result};
use crate::laplace::{contraction_study, fixed_point_residual, SGrid};
use crate::mixed::{
    gamma_fit_two_moments, gamma_moment, mixed_moment, moment_from_transform, phat_mixed,
    MixedEquilibriumSpec,
};
use crate::operators::{brute_force_t, iterate, ModelKind, Operators};
use crate::sim::{run_observed, CounterRng, InitialCondition, SimConfig};

/// `(id, name, title)` of every criterion.
pub const CRITERIA: [(u32, &str, &str); 10] = [
    (1, "gamma2-fixed-point", "Gamma(2) is a fixed point of T"),
    (2, "convergence", "iterates of T converge to Gamma(2)"),
    (3, "mean-and-moment-bound", "T conserves the mean and obeys the M_alpha bound"),
    (4, "contraction", "T contracts d_alpha at alpha = 1.5"),
    (5, "drm-equilibrium", "Gamma(1/2) is the Directed Random Market equilibrium"),
    (6, "mixed-moments", "mixed-model moments match the closed forms"),
    (7, "non-gamma", "the mixed equilibrium is not a Gamma distribution"),
    (8, "monte-carlo", "agent simulation tracks the density engine"),
    (9, "implicit-solution", "implicit transform solution is self-consistent"),
    (10, "oracle", "convolution T agrees with the triple-integral oracle"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// `value < threshold`.
    Below,
    /// `value <= threshold`.
    AtMost,
    /// `|value - target| <= threshold`.
    Near,
    /// Wall-clock seconds `< threshold`; never overridden.
    Runtime,
    /// A count `<= threshold`; never overridden.
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub kind: CheckKind,
    pub value: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub title: String,
    pub passed: bool,
    pub runtime_s: f64,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CriterionReport {
    /// `criterion 3 [mean-and-moment-bound] PASS (1.2 s)`.
    pub fn summary_line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut line = format!(
            "criterion {:>2} [{}] {verdict} ({:.1} s): {}",
            self.id, self.name, self.runtime_s, self.title
        );
        if let Some(e) = &self.error {
            line.push_str(&format!("; error: {e}"));
        }
        for c in self.checks.iter().filter(|c| !c.passed) {
            line.push_str(&format!("; {} = {:e} vs {:e}", c.label, c.value, c.threshold));
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_override: Option<f64>,
    pub criteria: Vec<CriterionReport>,
}

/// Runs the selected criteria.
pub struct Suite {
    tol_override: Option<f64>,
    mixed: OnceLock<std::result::Result<Density, String>>,
}

impl Default for Suite {
    fn default() -> Self {
        Suite::new(None)
    }
}

/// Collects checks for one criterion.
struct Checks<'a> {
    tol_override: Option<f64>,
    list: &'a mut Vec<Check>,
}

impl Checks<'_> {
    fn push(&mut self, label: impl Into<String>, kind: CheckKind, value: f64, threshold: f64, target: Option<f64>) {
        let threshold = match (kind, self.tol_override) {
            (CheckKind::Runtime | CheckKind::Count, _) | (_, None) => threshold,
            (_, Some(t)) => t,
        };
        let passed = match kind {
            CheckKind::Below | CheckKind::Runtime => value < threshold,
            CheckKind::AtMost | CheckKind::Count => value <= threshold,
            CheckKind::Near => (value - target.unwrap_or(0.0)).abs() <= threshold,
        };
        self.list.push(Check {
            label: label.into(),
            kind,
            value,
            threshold,
            target,
            passed,
        });
    }

    fn below(&mut self, label: impl Into<String>, value: f64, threshold: f64) {
        self.push(label, CheckKind::Below, value, threshold, None);
    }

    fn at_most(&mut self, label: impl Into<String>, value: f64, threshold: f64) {
        self.push(label, CheckKind::AtMost, value, threshold, None);
    }

    fn near(&mut self, label: impl Into<String>, value: f64, target: f64, tol: f64) {
        self.push(label, CheckKind::Near, value, tol, Some(target));
    }

    /// `|value / target - 1| <= rel`.
    fn relative(&mut self, label: impl Into<String>, value: f64, target: f64, rel: f64) {
        self.push(label, CheckKind::Near, value / target, rel, Some(1.0));
    }

    fn count(&mut self, label: impl Into<String>, value: usize, limit: usize) {
        self.push(label, CheckKind::Count, value as f64, limit as f64, None);
    }
}

impl Suite {
    /// `tol_override` replaces every numeric tolerance (not counts or runtimes).
    pub fn new(tol_override: Option<f64>) -> Self {
        Suite {
            tol_override,
            mixed: OnceLock::new(),
        }
    }

    /// Criteria whose id or name is in `only` (all when `None`).
    pub fn select(only: Option<&[String]>) -> Result<Vec<u32>> {
        let Some(only) = only else {
            return Ok(CRITERIA.iter().map(|c| c.0).collect());
        };
        let mut ids = Vec::new();
        for key in only {
            let found = CRITERIA
                .iter()
                .find(|(id, name, _)| key == name || key.parse::<u32>().ok() == Some(*id))
                .ok_or_else(|| Error::parameter("only", format!("unknown criterion `{key}`")))?;
            if !ids.contains(&found.0) {
                ids.push(found.0);
            }
        }
        ids.sort_unstable();
        Ok(ids)
    }

    pub fn run(&self, ids: &[u32]) -> AcceptanceReport {
        let criteria: Vec<CriterionReport> = ids.iter().map(|id| self.run_one(*id)).collect();
        AcceptanceReport {
            passed: criteria.iter().all(|c| c.passed),
            tol_override: self.tol_override,
            criteria,
        }
    }

    pub fn run_one(&self, id: u32) -> CriterionReport {
        let (_, name, title) = *CRITERIA
            .iter()
            .find(|c| c.0 == id)
            .expect("criterion ids come from CRITERIA");
        let mut list = Vec::new();
        let mut notes = Vec::new();
        let start = Instant::now();
        let outcome = {
            let mut checks = Checks {
                tol_override: self.tol_override,
                list: &mut list,
            };
            match id {
                1 => gamma2_fixed_point(&mut checks),
                2 => convergence(&mut checks),
                3 => mean_and_moment_bound(&mut checks),
                4 => contraction(&mut checks),
                5 => drm_equilibrium(&mut checks),
                6 => self.mixed_moments(&mut checks),
                7 => self.non_gamma(&mut checks, &mut notes),
                8 => monte_carlo(&mut checks),
                9 => implicit_solution(&mut checks),
                _ => oracle(&mut checks),
            }
        };
        let runtime_s = start.elapsed().as_secs_f64();
        let mut checks = Checks {
            tol_override: self.tol_override,
            list: &mut list,
        };
        checks.push("runtime_s", CheckKind::Runtime, runtime_s, runtime_limit(id), None);
        let error = outcome.err().map(|e| e.to_string());
        CriterionReport {
            id,
            name: name.to_string(),
            title: title.to_string(),
            passed: error.is_none() && list.iter().all(|c| c.passed),
            runtime_s,
            checks: list,
            notes,
            error,
        }
    }

    /// Mixed(0.5) iterated from Exponential(1) to consecutive KS < 1e-7;
    /// computed once and shared by criteria 6 and 7.
    fn mixed_equilibrium(&self) -> Result<&Density> {
        self.mixed
            .get_or_init(|| {
                let p0 = Density::exponential(default_grid(), 1.0).map_err(|e| e.to_string())?;
                let (p, trace) = iterate(&p0, ModelKind::Mixed(0.5), 2000, 1e-7).map_err(|e| e.to_string())?;
                if !trace.converged() {
                    return Err(format!("no convergence in {} steps", trace.steps()));
                }
                Ok(p)
            })
            .as_ref()
            .map_err(|e| Error::NumericInstability(e.clone()))
    }

    fn mixed_moments(&self, c: &mut Checks) -> Result<()> {
        let p = self.mixed_equilibrium()?;
        for k in 2..=4u32 {
            c.relative(format!("M{k}"), p.moment(k as f64), mixed_moment(0.5, 1.0, k)?, 0.02);
        }
        Ok(())
    }

    fn non_gamma(&self, c: &mut Checks, notes: &mut Vec<String>) -> Result<()> {
        let p = self.mixed_equilibrium()?;
        let fit = gamma_fit_two_moments(0.5, 1.0)?;
        for k in 1..=3u32 {
            c.relative(format!("M{k} vs Gamma fit"), p.moment(k as f64), gamma_moment(&fit, k), 0.02);
        }
        let excess = p.moment(4.0) - gamma_moment(&fit, 4);
        c.near("M4(converged) - M4(fit)", excess, 0.25 / 3.375, 0.03);
        notes.push(
            "Monte Carlo cannot resolve this gap at N = 1e5 (sampling std of M4 is about 0.6); \
             the deterministic density engine is the instrument."
                .to_string(),
        );
        Ok(())
    }
}

fn runtime_limit(id: u32) -> f64 {
    match id {
        1 => 5.0,
        2 => 120.0,
        6 => 300.0,
        8 => 180.0,
        _ => 300.0,
    }
}

fn default_grid() -> Grid {
    Grid::for_mean(1.0).expect("w = 1 is valid")
}

fn gamma2_fixed_point(c: &mut Checks) -> Result<()> {
    let p = gamma2_equilibrium(1.0, &default_grid())?;
    let tp = Operators::default().t(&p);
    c.below("sup |T[p] - p|", sup_diff(&tp, &p), 1e-3);
    c.below("KS(T[p], p)", density_ks(&tp, &p)?, 1e-4);
    Ok(())
}

fn convergence(c: &mut Checks) -> Result<()> {
    let g = default_grid();
    for (label, p0) in [
        ("uniform(0,2)", Density::uniform(g, 0.0, 2.0)?),
        ("exp(1)", Density::exponential(g, 1.0)?),
    ] {
        let (_, trace) = iterate(&p0, ModelKind::ImmediateExchange, 60, 1e-6)?;
        c.count(format!("{label}: iterations"), trace.steps(), 60);
        c.count(format!("{label}: unconverged"), usize::from(!trace.converged()), 0);
        let ks = trace.last().ks_to_target.unwrap_or(f64::INFINITY);
        c.below(format!("{label}: KS to Gamma(2)"), ks, 5e-3);
    }
    Ok(())
}

/// Ten densities on the default grid: Gamma/uniform mixtures with random
/// parameters (means between about 0.3 and 2).
pub fn random_test_densities(seed: u64, count: usize) -> Result<Vec<Density>> {
    let g = default_grid();
    (0..count as u64)
        .map(|i| {
            let mut r = CounterRng::new(seed, 0, i);
            let shape = 0.7 + 3.3 * r.uniform();
            let mean = 0.3 + 1.5 * r.uniform();
            let gamma = GammaParams::new(shape, mean / shape)?;
            let a = 1.5 * r.uniform();
            let b = a + 0.2 + 2.0 * r.uniform();
            let weight = r.uniform();
            Density::from_cdf(g, |x| {
                weight * gamma.cdf(x) + (1.0 - weight) * ((x - a) / (b - a)).clamp(0.0, 1.0)
            })
        })
        .collect()
}

fn mean_and_moment_bound(c: &mut Checks) -> Result<()> {
    let densities = random_test_densities(0x5eed, 10)?;
    let (mut drift, mut raw_drift, mut worst) = (0.0f64, 0.0f64, [f64::NEG_INFINITY; 3]);
    let alphas = [1.2, 1.5, 1.8];
    for p in &densities {
        let tp = Operators::default().t(p);
        drift = drift.max((tp.mean() - p.mean()).abs() / p.mean());
        let raw = Operators::raw().t(p);
        raw_drift = raw_drift.max((raw.mean() - p.mean()).abs() / p.mean());
        for (w, a) in worst.iter_mut().zip(alphas) {
            let bound = 2f64.powf(a) / (a + 1.0) * p.moment(a);
            *w = w.max(tp.moment(a) / bound - 1.0);
        }
    }
    c.at_most("relative M1 drift", drift, 1e-3);
    c.at_most("relative M1 drift without mean correction", raw_drift, 1e-3);
    for (w, a) in worst.iter().zip(alphas) {
        c.at_most(format!("M_{a}(T[p]) / bound - 1"), *w, 1e-2);
    }
    Ok(())
}

/// Five pairs of densities with mean one. Truncation at `x_max` lowers
/// the grid mean of heavy-tailed densities slightly, and any mean difference
/// `δ` adds a non-contracting `δ s^(1-α)` floor to `d_α`, so every density is
/// corrected to mean one exactly.
pub fn contraction_pairs(grid: Grid) -> Result<Vec<(Density, Density)>> {
    let pairs = [
        (Density::exponential(grid, 1.0)?, Density::uniform(grid, 0.0, 2.0)?),
        (Density::uniform(grid, 0.0, 2.0)?, gamma2_equilibrium(1.0, &grid)?),
        (Density::exponential(grid, 1.0)?, gamma_half_equilibrium(1.0, &grid)?),
        (Density::uniform(grid, 0.9, 1.1)?, Density::exponential(grid, 1.0)?),
        (
            Density::uniform(grid, 0.5, 1.5)?,
            Density::gamma(grid, GammaParams::new(3.0, 1.0 / 3.0)?)?,
        ),
    ];
    pairs
        .into_iter()
        .map(|(p, q)| Ok((p.with_mean(1.0)?, q.with_mean(1.0)?)))
        .collect()
}

fn contraction(c: &mut Checks) -> Result<()> {
    let alpha = 1.5;
    let table = contraction_study(&contraction_pairs(default_grid())?, alpha, 10, &SGrid::for_mean(1.0)?)?;
    let defined = table.rows.iter().filter(|r| r.ratio.is_some()).count();
    c.count("pairs x steps without a ratio", 50 - defined.min(50), 0);
    let max = table.max_ratio().unwrap_or(f64::INFINITY);
    c.at_most("max d_alpha ratio - 2/(alpha+1)", max - table.bound(), 1e-2);
    Ok(())
}

fn drm_equilibrium(c: &mut Checks) -> Result<()> {
    let p = gamma_half_equilibrium(1.0, &default_grid())?;
    c.below("KS(T_D[p], p)", density_ks(&Operators::default().td(&p), &p)?, 5e-3);
    // The x^(-1/2) singularity needs s_max dx of order one to be resolved.
    let fine = gamma_half_equilibrium(1.0, &Grid::new(20.0, 16384)?)?;
    let residual = fixed_point_residual(&fine, ModelKind::DirectedRandomMarket, &SGrid::for_mean(1.0)?)?;
    c.below("transform identity residual", residual, 5e-3);
    Ok(())
}

fn monte_carlo(c: &mut Checks) -> Result<()> {
    let p0 = Density::uniform(default_grid(), 0.0, 2.0)?;
    let days = [1u64, 5, 20];
    let mut engine = vec![p0.clone()];
    let ops = Operators::default();
    for _ in 0..20 {
        let next = ops.t(engine.last().expect("nonempty"));
        engine.push(next);
    }
    let config = SimConfig::new(ModelKind::ImmediateExchange, 100_000, 20, 0x1e_2017)
        .with_initial(InitialCondition::FromDensity(p0))
        .with_record_every(1);
    let mut worst = Vec::new();
    run_observed(&config, |pop| {
        if days.contains(&pop.day()) {
            let sample = EmpiricalSample::new(pop.wealths().to_vec(), None)?;
            let cdf = engine[pop.day() as usize].cdf();
            worst.push((pop.day(), ks_distance(&ecdf(&sample)?, &cdf)?));
        }
        Ok(())
    })?;
    for (day, ks) in worst {
        c.below(format!("day {day}: KS(empirical, engine)"), ks, 0.02);
    }
    Ok(())
}

fn implicit_solution(c: &mut Checks) -> Result<()> {
    let w = 1.0;
    let ie = MixedEquilibriumSpec::new(0.0, w)?;
    let drm = MixedEquilibriumSpec::new(1.0, w)?;
    let (mut e0, mut e1) = (0.0f64, 0.0f64);
    for s in SGrid::for_mean(w)?.points() {
        e0 = e0.max((phat_mixed(&ie, s)? - (1.0 + w * s / 2.0).powi(-2)).abs());
        e1 = e1.max((phat_mixed(&drm, s)? - (1.0 + 2.0 * w * s).powf(-0.5)).abs());
    }
    c.at_most("mu = 0 transform error", e0, 1e-9);
    c.at_most("mu = 1 transform error", e1, 1e-9);
    let mut worst = 0.0f64;
    for mu in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let spec = MixedEquilibriumSpec::new(mu, w)?;
        for k in 1..=4 {
            let exact = mixed_moment(mu, w, k)?;
            worst = worst.max((moment_from_transform(&spec, k)? / exact - 1.0).abs());
        }
    }
    c.at_most("moment routes, relative difference", worst, 1e-3);
    Ok(())
}

fn oracle(c: &mut Checks) -> Result<()> {
    for n in [128, 256] {
        let g = Grid::new(20.0, n)?;
        let densities = [
            Density::uniform(g, 0.0, 2.0)?,
            Density::exponential(g, 1.0)?,
            gamma2_equilibrium(1.0, &g)?,
            gamma_half_equilibrium(1.0, &g)?,
            Density::uniform(g, 0.5, 3.5)?,
        ];
        let worst = densities
            .iter()
            .map(|p| Ok(sup_diff(&Operators::default().t(p), &brute_force_t(p)?)))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        c.below(format!("n = {n}: sup |T - brute force|"), worst, 1e-6);
    }
    Ok(())
}

fn sup_diff(p: &Density, q: &Density) -> f64 {
    p.values()
        .iter()
        .zip(q.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
