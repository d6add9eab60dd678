use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::CounterRng;
use crate::dist::Density;
use crate::error::{check_positive, Error, Result};
use crate::operators::ModelKind;

/// Wealths of `N` agents after `t` days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    wealths: Vec<f64>,
    total: f64,
    t: u64,
}

impl Population {
    pub fn new(wealths: Vec<f64>) -> Result<Self> {
        if wealths.len() < 2 || wealths.len() % 2 != 0 {
            return Err(Error::parameter(
                "N",
                format!("population size must be even and >= 2, got {}", wealths.len()),
            ));
        }
        if let Some((i, w)) = wealths
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::Input(format!("agent {i} has invalid wealth {w}")));
        }
        let total = wealths.iter().sum();
        Ok(Population { wealths, total, t: 0 })
    }

    /// `n` agents holding `w` each.
    pub fn equal(n: usize, w: f64) -> Result<Self> {
        check_positive("w", w)?;
        Population::new(vec![w; n])
    }

    /// `n` independent draws from `p` by inversion of its CDF. Agent `i` uses
    /// its own stream, so the draw does not depend on thread scheduling.
    pub fn from_density(n: usize, p: &Density, seed: u64) -> Result<Self> {
        let mass = p.mass();
        if !((mass - 1.0).abs() <= 1e-9) {
            return Err(Error::Input(format!("initial density has mass {mass}, expected 1")));
        }
        let grid = *p.grid();
        let dx = grid.dx();
        let mut cum = Vec::with_capacity(grid.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for v in p.values() {
            acc += v * dx;
            cum.push(acc);
        }
        let wealths = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let u = CounterRng::new(seed, INIT_DAY, i).uniform() * acc;
                let k = cum.partition_point(|c| *c <= u).clamp(1, grid.len()) - 1;
                let width = cum[k + 1] - cum[k];
                let frac = if width > 0.0 { (u - cum[k]) / width } else { 0.5 };
                grid.edge(k) + frac.clamp(0.0, 1.0) * dx
            })
            .collect();
        Population::new(wealths)
    }

    pub fn wealths(&self) -> &[f64] {
        &self.wealths
    }

    pub fn len(&self) -> usize {
        self.wealths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wealths.is_empty()
    }

    /// Total wealth at construction.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Days elapsed.
    pub fn day(&self) -> u64 {
        self.t
    }

    /// `|Σ wealths - total|`.
    pub fn conservation_error(&self) -> f64 {
        (self.wealths.iter().sum::<f64>() - self.total).abs()
    }

    pub fn into_wealths(self) -> Vec<f64> {
        self.wealths
    }
}

/// Stream index reserved for sampling initial wealths.
const INIT_DAY: u64 = u64::MAX;
/// Stream index reserved for the daily pairing shuffle.
const SHUFFLE_STREAM: u64 = u64::MAX;

/// Uniform `[0, 1)` variates consumed by one pair on one day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDraws {
    /// Chooses the directed rule when below `μ`.
    pub coin: f64,
    /// Below ½ the lower-numbered agent loses a directed transfer.
    pub loser: f64,
    /// Fractions for the lower-numbered agent and for the other one.
    pub eps: [f64; 2],
}

/// Source of the randomness used by [`step_day`].
pub trait DrawSource: Sync {
    /// Permutes `agents`; consecutive entries are then paired.
    fn shuffle(&self, day: u64, agents: &mut [usize]);

    fn pair_draws(&self, day: u64, pair: u64) -> PairDraws;
}

/// The production stream: everything derived from a single seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededDraws {
    pub seed: u64,
}

impl DrawSource for SeededDraws {
    fn shuffle(&self, day: u64, agents: &mut [usize]) {
        agents.shuffle(&mut CounterRng::new(self.seed, day, SHUFFLE_STREAM));
    }

    fn pair_draws(&self, day: u64, pair: u64) -> PairDraws {
        let mut r = CounterRng::new(self.seed, day, pair);
        PairDraws {
            coin: r.uniform(),
            loser: r.uniform(),
            eps: [r.uniform(), r.uniform()],
        }
    }
}

/// Fixed pairing (agents `2k`, `2k+1`) and the same draws for every pair.
/// Lets specific interactions be reproduced exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcedDraws(pub PairDraws);

impl DrawSource for ForcedDraws {
    fn shuffle(&self, _day: u64, _agents: &mut [usize]) {}

    fn pair_draws(&self, _day: u64, _pair: u64) -> PairDraws {
        self.0
    }
}

/// New wealths of agents `a < b` after one interaction.
///
/// Immediate exchange: each gives away the fraction `ε` of its own wealth
/// drawn for it. Directed transfer: the loser gives its fraction to the
/// winner.
#[inline]
pub fn interact(model: ModelKind, xa: f64, xb: f64, d: &PairDraws) -> (f64, f64) {
    if d.coin < model.directed_probability() {
        if d.loser < 0.5 {
            let t = d.eps[0] * xa;
            (xa - t, xb + t)
        } else {
            let t = d.eps[1] * xb;
            (xa + t, xb - t)
        }
    } else {
        let ta = d.eps[0] * xa;
        let tb = d.eps[1] * xb;
        (xa - ta + tb, xb - tb + ta)
    }
}

/// One day: a uniformly random perfect matching, then every pair interacts.
pub fn step_day(pop: &mut Population, model: ModelKind, draws: &dyn DrawSource) -> Result<()> {
    model.validate()?;
    let day = pop.t;
    let mut order: Vec<usize> = (0..pop.wealths.len()).collect();
    draws.shuffle(day, &mut order);
    let wealths = &pop.wealths;
    let updates: Vec<[(usize, f64); 2]> = order
        .par_chunks_exact(2)
        .enumerate()
        .map(|(pair, c)| {
            let (a, b) = (c[0].min(c[1]), c[0].max(c[1]));
            let d = draws.pair_draws(day, pair as u64);
            let (xa, xb) = interact(model, wealths[a], wealths[b], &d);
            [(a, xa), (b, xb)]
        })
        .collect();
    for [(a, xa), (b, xb)] in updates {
        pop.wealths[a] = xa;
        pop.wealths[b] = xb;
    }
    pop.t += 1;
    Ok(())
}
