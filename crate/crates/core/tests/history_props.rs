mod common;

use std::sync::Arc;

use common::*;
use histories::history::{
    check_decoherence, consistency_residual, decoherence_residual, lsw_probability, HistoryMeasure, HistoryPrefix,
    MeasurementSchedule,
};
use proptest::prelude::*;
use rand::Rng;

fn random_measure(seed: u64, max_dim: usize) -> (Vec<histories::Instrument>, HistoryMeasure) {
    let mut r = rng(seed);
    let n = r.gen_range(2..=max_dim);
    let k = r.gen_range(2..=n.min(3));
    let steps = r.gen_range(1..=3);
    let instruments = random_decohering_instruments(n, k, steps, &mut r);
    let state = random_density(n, &mut r);
    let schedule = Arc::new(MeasurementSchedule::periodic(instruments.clone()).unwrap());
    (instruments, HistoryMeasure::new(schedule, state).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lsw_matches_naive_products(seed in any::<u64>()) {
        let (instruments, measure) = random_measure(seed, 6);
        let k = measure.schedule().alphabet().len();
        for len in 1..=3 {
            for word in measure.schedule().alphabet().words(len) {
                let got = lsw_probability(&measure, &HistoryPrefix::initial(word.clone())).unwrap();
                let oracle = naive_lsw(&instruments, measure.state(), &word);
                prop_assert!((got - oracle).abs() <= 1e-12, "{word:?} (k={k})");
            }
        }
    }

    #[test]
    fn commuting_schedules_decohere(seed in any::<u64>()) {
        let (_, measure) = random_measure(seed, 5);
        prop_assert!(measure.decoherence().passed);
        prop_assert!(check_decoherence(measure.schedule(), 2, 5, 1e-10).unwrap());
    }

    #[test]
    fn probabilities_sum_to_one_per_level(seed in any::<u64>()) {
        let (_, measure) = random_measure(seed, 6);
        for len in 1..=4 {
            let total: f64 = measure
                .schedule()
                .alphabet()
                .words(len)
                .map(|w| lsw_probability(&measure, &HistoryPrefix::initial(w)).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn consistency_on_random_decohering_schedules() {
    for seed in 0..20 {
        let (_, measure) = random_measure(1000 + seed, 8);
        for len in 0..5 {
            for word in measure.schedule().alphabet().words(len) {
                let r = consistency_residual(&measure, &HistoryPrefix::initial(word)).unwrap();
                assert!(r <= 1e-10, "seed {seed}: residual {r}");
            }
        }
    }
}

#[test]
fn unrelated_bases_do_not_decohere() {
    // Two instruments in independent random bases almost never commute.
    let mut r = rng(77);
    let a = random_instrument(3, 3, &mut r);
    let b = random_instrument(3, 3, &mut r);
    let schedule = MeasurementSchedule::finite(vec![a, b.clone(), b]).unwrap();
    assert!(decoherence_residual(&schedule, 1, 3).unwrap() > 1e-3);
}
