use proptest::prelude::*;
use rlslab::engine::{run_until, Marker};
use rlslab::harness::Scenario;
use rlslab::{Caps, Configuration, ProcessState, ProtocolVariant, RngStream};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::HashMap;

fn run_to_time(state: &mut ProcessState, t_end: f64, rng: &mut RngStream) {
    let caps = Caps {
        max_clock: t_end,
        ..Caps::default()
    };
    run_until(state, |_| false, ProtocolVariant::NonStrict, rng, caps).unwrap();
}

/// Sorted configurations reached at a fixed time by the anonymous and the
/// labeled engine follow the same law (chi-square homogeneity test).
#[test]
fn labeled_and_anonymous_engines_agree_in_law() {
    let start = Configuration::new(vec![7, 1, 0, 0]).unwrap();
    let runs = 40_000u64;
    let mut counts: HashMap<Vec<u64>, [u64; 2]> = HashMap::new();
    for r in 0..runs {
        let mut a = ProcessState::new(start.clone());
        let mut b = ProcessState::labeled(start.clone());
        run_to_time(&mut a, 0.35, &mut RngStream::new(71, r));
        run_to_time(&mut b, 0.35, &mut RngStream::new(72, r));
        counts.entry(a.config().sorted().into_loads()).or_default()[0] += 1;
        counts.entry(b.config().sorted().into_loads()).or_default()[1] += 1;
    }
    let cells: Vec<[u64; 2]> = counts.into_values().filter(|c| c[0] + c[1] >= 20).collect();
    assert!(cells.len() >= 4);
    let stat: f64 = cells
        .iter()
        .map(|c| {
            let e = (c[0] + c[1]) as f64 / 2.0;
            ((c[0] as f64 - e).powi(2) + (c[1] as f64 - e).powi(2)) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new((cells.len() - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi2 = {stat}, p = {p}");
}

fn check_monotone(start: Configuration, seed: u64, events: u64) -> Result<(), TestCaseError> {
    let m = start.m();
    let mut s = ProcessState::new(start);
    let mut rng = RngStream::new(seed, 0);
    for _ in 0..events {
        let (d, lo, hi) = (s.scaled_discrepancy(), s.min_load(), s.max_load());
        s.step(ProtocolVariant::NonStrict, &mut rng).unwrap();
        prop_assert!(s.scaled_discrepancy() <= d);
        prop_assert!(s.min_load() >= lo);
        prop_assert!(s.max_load() <= hi);
        prop_assert_eq!(s.config().loads().iter().sum::<u64>(), m);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discrepancy_never_increases(loads in prop::collection::vec(0u64..40, 2..24), seed in any::<u64>()) {
        prop_assume!(loads.iter().sum::<u64>() > 0);
        check_monotone(Configuration::new(loads).unwrap(), seed, 3000)?;
    }

    #[test]
    fn markers_are_nested(n in 2usize..40, k in 1u64..6, seed in any::<u64>()) {
        let m = k * n as u64;
        let mut rng = RngStream::new(seed, 0);
        let start = Scenario::UniformRandom.generate(n, m, &mut rng).unwrap();
        let mut s = ProcessState::new(start);
        let report = rlslab::engine::run_with_markers(
            &mut s, ProtocolVariant::NonStrict, &mut rng, Caps::default()).unwrap();
        let t = |mk| report.marker(mk).unwrap();
        prop_assert!(t(Marker::DiscLe1) <= t(Marker::Perfect));
        prop_assert!(t(Marker::Disc8Ln) <= t(Marker::DiscLe1));
        prop_assert!(t(Marker::Disc96Ln) <= t(Marker::Disc8Ln));
        prop_assert!(t(Marker::OverloadedN) <= t(Marker::DiscLe1));
    }
}
