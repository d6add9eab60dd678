//! Finite-population Monte Carlo simulation of the exchange rules.
//!
//! Every day all agents are paired by a uniformly random perfect matching
//! (Fisher-Yates shuffle, then consecutive pairs) and each pair interacts
//! once.

mod population;
mod rng;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dist::{Density, EmpiricalSample, MomentReport};
use crate::error::{Error, Result};
use crate::operators::ModelKind;

pub use population::{
    interact, step_day, DrawSource, ForcedDraws, PairDraws, Population, SeededDraws,
};
pub use rng::CounterRng;

/// Pairing protocol recorded in every manifest.
pub const PAIRING_PROTOCOL: &str = "uniform random perfect matching per day (shuffle, consecutive pairs)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// Every agent starts with `w`.
    Equal(f64),
    /// Independent draws from a grid density.
    FromDensity(Density),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: ModelKind,
    pub n: usize,
    pub days: u64,
    pub seed: u64,
    pub initial: InitialCondition,
    pub record_every: u64,
}

impl SimConfig {
    pub fn new(model: ModelKind, n: usize, days: u64, seed: u64) -> Self {
        SimConfig {
            model,
            n,
            days,
            seed,
            initial: InitialCondition::Equal(1.0),
            record_every: days.max(1),
        }
    }

    pub fn with_initial(mut self, initial: InitialCondition) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_record_every(mut self, every: u64) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.record_every == 0 {
            return Err(Error::parameter("record_every", "must be >= 1"));
        }
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::parameter("N", format!("must be even and >= 2, got {}", self.n)));
        }
        Ok(())
    }

    pub fn initial_population(&self) -> Result<Population> {
        match &self.initial {
            InitialCondition::Equal(w) => Population::equal(self.n, *w),
            InitialCondition::FromDensity(p) => Population::from_density(self.n, p, self.seed),
        }
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            model: self.model.short_name().to_string(),
            mu: self.model.directed_probability(),
            n: self.n,
            days: self.days,
            seed: self.seed,
            record_every: self.record_every,
            initial: match &self.initial {
                InitialCondition::Equal(w) => format!("equal:{w}"),
                InitialCondition::FromDensity(p) => format!(
                    "density on [0, {}] with {} cells",
                    p.grid().x_max(),
                    p.grid().len()
                ),
            },
            pairing: PAIRING_PROTOCOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model: String,
    pub mu: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub days: u64,
    pub seed: u64,
    pub record_every: u64,
    pub initial: String,
    pub pairing: String,
    pub version: String,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest fields serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("bad manifest: {e}")))
    }
}

/// Wealths of every agent on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub day: u64,
    pub wealths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub sample: EmpiricalSample,
    pub snapshots: Vec<Snapshot>,
    pub manifest: RunManifest,
}

/// Runs `config`, calling `observe` with the population on day 0 and every
/// `record_every` days after it (and on the final day).
pub fn run_observed(
    config: &SimConfig,
    mut observe: impl FnMut(&Population) -> Result<()>,
) -> Result<(EmpiricalSample, RunManifest)> {
    config.validate()?;
    let draws = SeededDraws { seed: config.seed };
    let mut pop = config.initial_population()?;
    observe(&pop)?;
    for day in 1..=config.days {
        step_day(&mut pop, config.model, &draws)?;
        if day % config.record_every == 0 || day == config.days {
            observe(&pop)?;
        }
    }
    let sample = EmpiricalSample::new(pop.into_wealths(), Some(config.seed))?;
    Ok((sample, config.manifest()))
}

/// Runs `config` and keeps every recorded snapshot in memory.
pub fn run(config: &SimConfig) -> Result<SimOutput> {
    let mut snapshots = Vec::new();
    let (sample, manifest) = run_observed(config, |pop| {
        snapshots.push(Snapshot {
            day: pop.day(),
            wealths: pop.wealths().to_vec(),
        });
        Ok(())
    })?;
    Ok(SimOutput {
        sample,
        snapshots,
        manifest,
    })
}

/// Sample averages of `x^k`.
pub fn empirical_moments(sample: &EmpiricalSample, orders: &[f64]) -> Result<MomentReport> {
    sample.moments(orders)
}

/// Appends rows `day,agent_id,wealth`; writes the header when `header` is set.
pub fn write_snapshot<W: Write + ?Sized>(out: &mut W, day: u64, wealths: &[f64], header: bool) -> std::io::Result<()> {
    if header {
        writeln!(out, "day,agent_id,wealth")?;
    }
    for (i, w) in wealths.iter().enumerate() {
        writeln!(out, "{day},{i},{w:.16e}")?;
    }
    Ok(())
}

/// Appends rows `day,bin_left,bin_right,count` for `bins` equal bins on
/// `[0, x_max)`; the last bin also counts wealths beyond `x_max`.
pub fn write_histogram<W: Write + ?Sized>(
    out: &mut W,
    day: u64,
    wealths: &[f64],
    bins: usize,
    x_max: f64,
    header: bool,
) -> std::io::Result<()> {
    if header {
        writeln!(out, "day,bin_left,bin_right,count")?;
    }
    let width = x_max / bins as f64;
    let mut counts = vec![0u64; bins];
    for w in wealths {
        let b = ((w / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    for (b, c) in counts.iter().enumerate() {
        writeln!(out, "{day},{:.16e},{:.16e},{c}", b as f64 * width, (b + 1) as f64 * width)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Grid;

    #[test]
    fn forced_interactions() {
        let half = PairDraws { coin: 0.9, loser: 0.9, eps: [0.5, 0.5] };
        let mut pop = Population::new(vec![1.0, 1.0]).unwrap();
        step_day(&mut pop, ModelKind::ImmediateExchange, &ForcedDraws(half)).unwrap();
        assert_eq!(pop.wealths(), &[1.0, 1.0]);
        assert_eq!(pop.day(), 1);

        let lose_first = PairDraws { coin: 0.0, loser: 0.1, eps: [0.3, 0.8] };
        let mut pop = Population::new(vec![1.0, 0.0]).unwrap();
        step_day(&mut pop, ModelKind::DirectedRandomMarket, &ForcedDraws(lose_first)).unwrap();
        assert_eq!(pop.wealths(), &[0.7, 0.3]);
    }

    #[test]
    fn population_validation() {
        assert!(Population::new(vec![1.0]).is_err());
        assert!(Population::new(vec![1.0, 1.0, 1.0]).is_err());
        assert!(Population::new(vec![1.0, -1.0]).is_err());
        assert!(Population::equal(4, 0.0).is_err());
        let cfg = SimConfig::new(ModelKind::ImmediateExchange, 10, 5, 1).with_record_every(0);
        assert!(run(&cfg).is_err());
    }

    #[test]
    fn conserves_wealth_and_stays_nonnegative() {
        let mut pop = Population::equal(1000, 1.0).unwrap();
        let draws = SeededDraws { seed: 3 };
        for model in [ModelKind::ImmediateExchange, ModelKind::DirectedRandomMarket, ModelKind::Mixed(0.3)] {
            for _ in 0..20 {
                step_day(&mut pop, model, &draws).unwrap();
                assert!(pop.conservation_error() <= 1000.0 * f64::EPSILON * pop.total());
                assert!(pop.wealths().iter().all(|w| *w >= 0.0));
            }
        }
    }

    #[test]
    fn snapshots_follow_record_every() {
        let cfg = SimConfig::new(ModelKind::Mixed(0.5), 100, 7, 9).with_record_every(3);
        let out = run(&cfg).unwrap();
        let days: Vec<u64> = out.snapshots.iter().map(|s| s.day).collect();
        assert_eq!(days, vec![0, 3, 6, 7]);
        assert_eq!(out.snapshots.last().unwrap().wealths, out.sample.wealths());
        assert_eq!(out.manifest.record_every, 3);
        let json = out.manifest.to_json();
        assert!(json.contains("\"N\": 100"));
        assert_eq!(RunManifest::from_json(&json).unwrap(), out.manifest);
    }

    #[test]
    fn initial_density_sampling() {
        let grid = Grid::new(20.0, 2048).unwrap();
        let p = Density::uniform(grid, 0.0, 2.0).unwrap();
        let pop = Population::from_density(20_000, &p, 5).unwrap();
        let mean = pop.total() / 20_000.0;
        assert!((mean - 1.0).abs() < 0.02);
        // The cell holding x = 2 is only partly covered by the support.
        assert!(pop.wealths().iter().all(|w| (0.0..=2.0 + grid.dx()).contains(w)));
    }

    #[test]
    fn csv_writers() {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, 4, &[1.0, 2.0], true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("day,agent_id,wealth"));
        assert!(text.lines().nth(2).unwrap().starts_with("4,1,2.0"));
        let mut buf = Vec::new();
        write_histogram(&mut buf, 0, &[0.5, 1.5, 9.0], 2, 2.0, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",1"));
        assert!(text.lines().nth(2).unwrap().ends_with(",2"));
    }
}
