mod common;

use std::sync::Arc;

use common::*;
use histories::history::{CylinderFunction, HistoryMeasure, HistoryPrefix, MeasurementSchedule};
use histories::ndm::{build_schedule, MixtureState, NdmModel, Representation};
use histories::povm::{
    integrate, phi_cylinder, phi_duality_residual, phi_homomorphism_check, phi_sigma_additivity_residual,
    theorem4_check,
};
use histories::{Alphabet, ComplexMatrix, C64};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_schedule(r: &mut ChaCha8Rng) -> MeasurementSchedule {
    let n = r.gen_range(2..=5);
    let k = r.gen_range(2..=n.min(3));
    MeasurementSchedule::periodic(random_decohering_instruments(n, k, 2, r)).unwrap()
}

fn random_function(start: usize, end: usize, alphabet: &Alphabet, r: &mut ChaCha8Rng, complex: bool) -> CylinderFunction {
    let k = alphabet.len();
    let size = k.pow((end - start + 1) as u32);
    let table = (0..size)
        .map(|_| C64::new(r.gen_range(-1.0..1.0), if complex { r.gen_range(-1.0..1.0) } else { 0.0 }))
        .collect();
    CylinderFunction::new(start, end, k, table).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn phi_is_linear_and_star_compatible(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_schedule(&mut r);
        let f = random_function(1, 3, s.alphabet(), &mut r, true);
        let g = random_function(2, 3, s.alphabet(), &mut r, true);
        let (a, b) = (C64::new(0.3, -1.2), C64::new(-0.7, 0.4));
        let lhs = phi_cylinder(&s, &f.linear_combination(a, &g, b).unwrap()).unwrap();
        let rhs = &phi_cylinder(&s, &f).unwrap().scale(a) + &phi_cylinder(&s, &g).unwrap().scale(b);
        prop_assert!(lhs.max_diff(&rhs).unwrap() <= 1e-12);

        let adj = phi_cylinder(&s, &f).unwrap().adjoint();
        prop_assert!(phi_cylinder(&s, &f.conj()).unwrap().max_diff(&adj).unwrap() <= 1e-12);
    }

    #[test]
    fn phi_is_contractive_and_positive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_schedule(&mut r);
        let f = random_function(1, 3, s.alphabet(), &mut r, true);
        prop_assert!(phi_cylinder(&s, &f).unwrap().op_norm() <= f.sup_norm() + 1e-12);
        let pos = CylinderFunction::new(1, 3, f.alphabet_len(), f.table().iter().map(|z| C64::new(z.norm(), 0.0)).collect()).unwrap();
        let phi = phi_cylinder(&s, &pos).unwrap();
        prop_assert!(phi.is_hermitian(1e-12));
        prop_assert!(phi.min_eigenvalue().unwrap() >= -1e-12);
    }

    #[test]
    fn duality_with_the_lsw_measure(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_schedule(&mut r);
        let rho = random_density(s.dim(), &mut r);
        let f = random_function(2, 4, s.alphabet(), &mut r, true);
        prop_assert!(phi_duality_residual(&s, &rho, &f).unwrap() <= 1e-12);
    }
}

/// Random partition of all words on steps `1..=len` into at most `parts`
/// cylinder sets.
fn random_partition(alphabet: &Alphabet, len: usize, parts: usize, r: &mut ChaCha8Rng) -> Vec<CylinderFunction> {
    let mut groups: Vec<Vec<Vec<usize>>> = vec![Vec::new(); parts];
    for w in alphabet.words(len) {
        groups[r.gen_range(0..parts)].push(w);
    }
    groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| CylinderFunction::indicator_of_set(1, len, alphabet, &g).unwrap())
        .collect()
}

#[test]
fn phi_of_everything_is_identity_and_partitions_add_up() {
    let mut r = rng(2024);
    for _ in 0..50 {
        let s = random_schedule(&mut r);
        let len = r.gen_range(1..=4);
        let one = CylinderFunction::constant(1, len, s.alphabet(), C64::new(1.0, 0.0)).unwrap();
        let phi = phi_cylinder(&s, &one).unwrap();
        assert!(phi.max_diff(&ComplexMatrix::identity(s.dim())).unwrap() <= 1e-12);
        let parts = random_partition(s.alphabet(), len, r.gen_range(2..=6), &mut r);
        let mut sum = ComplexMatrix::zeros(s.dim());
        for p in &parts {
            sum = &sum + &phi_cylinder(&s, p).unwrap();
        }
        assert!(sum.max_diff(&ComplexMatrix::identity(s.dim())).unwrap() <= 1e-10);
        assert!(phi_sigma_additivity_residual(&s, &parts).unwrap() <= 1e-10);
    }
}

#[test]
fn homomorphism_on_the_label_model() {
    let model = NdmModel::default_law(2);
    let s = build_schedule(&model, Representation::Block).unwrap();
    let mut r = rng(5);
    for _ in 0..10 {
        let delta_len = r.gen_range(1..=3);
        let word: Vec<usize> = (0..delta_len).map(|_| r.gen_range(0..2)).collect();
        let delta = CylinderFunction::indicator(&HistoryPrefix::initial(word), s.alphabet()).unwrap();
        let start = delta_len + 1 + r.gen_range(0..2);
        let f = random_function(start, start + r.gen_range(0..3), s.alphabet(), &mut r, true);
        let report = phi_homomorphism_check(&s, &f, &delta, 1e-10).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.window_residual <= 1e-12);
    }
}

#[test]
fn theorem4_on_random_states() {
    let model = NdmModel::default_law(2);
    let s = build_schedule(&model, Representation::Block).unwrap();
    let mut r = rng(6);
    let prefixes: Vec<HistoryPrefix> = (0..=3).flat_map(|l| s.alphabet().words(l)).map(HistoryPrefix::initial).collect();
    for _ in 0..5 {
        let rho = random_density(3, &mut r);
        let table = (0..1 << 4).map(|_| C64::new(r.gen_range(0.0..2.0), 0.0)).collect();
        let f = CylinderFunction::new(4, 7, 2, table).unwrap();
        let report = theorem4_check(&s, &rho, &f, &prefixes, 1e-9).unwrap();
        assert!(report.passed, "{}", report.max_residual);
    }
}

#[test]
fn integration_reproduces_mixture_weights() {
    let model = NdmModel::binary(&[0.2, 0.7]).unwrap();
    let s = Arc::new(build_schedule(&model, Representation::Block).unwrap());
    let state = MixtureState::new(vec![0.5, 0.5]).unwrap().density(&model).unwrap();
    let measure = HistoryMeasure::new(s.clone(), state.clone()).unwrap();
    assert!(measure.decoherence().passed);
    let first_one = CylinderFunction::indicator(&HistoryPrefix::initial(vec![1]), s.alphabet()).unwrap();
    assert!((integrate(&s, &state, &first_one).unwrap() - 0.45).abs() < 1e-14);
}
