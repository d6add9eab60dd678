use kinex::dist::*;
use kinex::operators::{ModelKind, Operators};
use kinex::sim::*;
use proptest::prelude::*;

const N: usize = 100_000;

fn ks_to_gamma(sample: &EmpiricalSample, g: GammaParams) -> f64 {
    ks_distance(&ecdf(sample).unwrap(), &ClosedFormCdf::new(|x| g.cdf(x))).unwrap()
}

fn moment(sample: &EmpiricalSample, k: f64) -> f64 {
    empirical_moments(sample, &[k]).unwrap().get(k).unwrap()
}

#[test]
fn immediate_exchange_reaches_gamma2() {
    let out = run(&SimConfig::new(ModelKind::ImmediateExchange, N, 500, 11)).unwrap();
    let ks = ks_to_gamma(&out.sample, GammaParams::immediate_exchange(1.0).unwrap());
    assert!(ks < 0.01, "KS {ks}");
    let m2 = moment(&out.sample, 2.0);
    assert!((m2 / 1.5 - 1.0).abs() < 0.03, "M2 {m2}");
    assert!((moment(&out.sample, 1.0) - 1.0).abs() < 1e-9);
}

#[test]
fn directed_market_reaches_gamma_half() {
    let out = run(&SimConfig::new(ModelKind::DirectedRandomMarket, N, 1000, 12)).unwrap();
    let ks = ks_to_gamma(&out.sample, GammaParams::directed_market(1.0).unwrap());
    assert!(ks < 0.015, "KS {ks}");
}

#[test]
fn mixed_second_moment() {
    let out = run(&SimConfig::new(ModelKind::Mixed(0.5), N, 1000, 13)).unwrap();
    let m2 = moment(&out.sample, 2.0);
    assert!((m2 / 2.0 - 1.0).abs() < 0.03, "M2 {m2}");
}

#[test]
fn moment_examples() {
    let s = EmpiricalSample::new(vec![1.0; 4], None).unwrap();
    assert_eq!(moment(&s, 3.0), 1.0);
    let s = EmpiricalSample::new(vec![0.0, 2.0], None).unwrap();
    assert_eq!(moment(&s, 1.0), 1.0);
}

#[test]
fn mixed_endpoints_reproduce_pure_models() {
    for (mu, pure) in [(0.0, ModelKind::ImmediateExchange), (1.0, ModelKind::DirectedRandomMarket)] {
        let a = run(&SimConfig::new(ModelKind::Mixed(mu), 2000, 30, 5)).unwrap();
        let b = run(&SimConfig::new(pure, 2000, 30, 5)).unwrap();
        assert_eq!(a.sample.wealths(), b.sample.wealths());
    }
}

#[test]
fn runs_are_deterministic_in_the_seed() {
    let config = SimConfig::new(ModelKind::Mixed(0.3), 1000, 40, 99).with_record_every(10);
    let a = run(&config).unwrap();
    let b = run(&config).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.snapshots.len(), 5);
    let c = run(&SimConfig { seed: 100, ..config }).unwrap();
    assert_ne!(a.sample.wealths(), c.sample.wealths());
}

#[test]
fn manifest_round_trip() {
    let config = SimConfig::new(ModelKind::Mixed(0.25), 10, 3, 7);
    let m = config.manifest();
    assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
    assert!(m.to_json().contains("\"N\""));
}

#[test]
fn rejects_bad_configurations() {
    assert!(run(&SimConfig::new(ModelKind::Mixed(1.5), 10, 1, 0)).is_err());
    assert!(run(&SimConfig::new(ModelKind::ImmediateExchange, 11, 1, 0)).is_err());
    assert!(run(&SimConfig::new(ModelKind::ImmediateExchange, 0, 1, 0)).is_err());
}

#[test]
fn simulation_tracks_the_density_engine() {
    let grid = Grid::for_mean(1.0).unwrap();
    let p0 = Density::uniform(grid, 0.0, 2.0).unwrap();
    let ops = Operators::default();
    let days = [1u64, 10, 50];
    for model in [ModelKind::ImmediateExchange, ModelKind::DirectedRandomMarket, ModelKind::Mixed(0.5)] {
        let mut engine = vec![p0.clone()];
        for _ in 0..50 {
            engine.push(ops.apply(engine.last().unwrap(), model).unwrap());
        }
        let config = SimConfig::new(model, N, 50, 21)
            .with_initial(InitialCondition::FromDensity(p0.clone()))
            .with_record_every(1);
        run_observed(&config, |pop| {
            if days.contains(&pop.day()) {
                let sample = EmpiricalSample::new(pop.wealths().to_vec(), None)?;
                let ks = ks_distance(&ecdf(&sample)?, &engine[pop.day() as usize].cdf())?;
                assert!(ks < 0.02, "{model:?} day {}: KS {ks}", pop.day());
            }
            Ok(())
        })
        .unwrap();
    }
}

fn draws() -> impl Strategy<Value = PairDraws> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0)
        .prop_map(|(coin, loser, e0, e1)| PairDraws { coin, loser, eps: [e0, e1] })
}

proptest! {
    #[test]
    fn interactions_conserve_and_stay_nonnegative(xa in 0.0f64..1e3, xb in 0.0f64..1e3,
                                                 mu in 0.0f64..=1.0, d in draws()) {
        let (ya, yb) = interact(ModelKind::Mixed(mu), xa, xb, &d);
        prop_assert!(ya >= 0.0 && yb >= 0.0);
        prop_assert!((ya + yb - xa - xb).abs() <= 1e-12 * (xa + xb).max(1.0));
    }

    #[test]
    fn a_day_conserves_total_wealth(ws in prop::collection::vec(0.0f64..10.0, 1..40usize),
                                    mu in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut ws = ws;
        if ws.len() % 2 == 1 {
            ws.push(1.0);
        }
        let mut pop = Population::new(ws).unwrap();
        for _ in 0..5 {
            step_day(&mut pop, ModelKind::Mixed(mu), &SeededDraws { seed }).unwrap();
        }
        prop_assert!(pop.wealths().iter().all(|w| *w >= 0.0));
        prop_assert!(pop.conservation_error() <= 1e-12 * pop.total().max(1.0));
    }

    #[test]
    fn forced_days_conserve(ws in prop::collection::vec(0.0f64..10.0, 1..20usize),
                            mu in 0.0f64..=1.0, d in draws()) {
        let mut ws = ws;
        if ws.len() % 2 == 1 {
            ws.push(0.5);
        }
        let before: f64 = ws.iter().sum();
        let mut pop = Population::new(ws).unwrap();
        step_day(&mut pop, ModelKind::Mixed(mu), &ForcedDraws(d)).unwrap();
        let after: f64 = pop.wealths().iter().sum();
        prop_assert!((after - before).abs() <= 1e-12 * before.max(1.0));
    }
}
