//! Kraus and Markov fast paths against brute-force joint evolution.

mod common;

use common::*;
use nucpol_core::engine::{apply_channel, decohere_diag, incoherent_markov, DensityMatrix, Propagation, RunMode};
use nucpol_core::sequences::{sequence_channel, sequence_unitary, Protocol, SequenceSpec};
use nucpol_core::spinalg::ComplexMatrix;
use proptest::prelude::*;

const REPS: usize = 50;

fn nuclei_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.15..0.15f64, 0.0..0.4f64), 1..=3)
}

fn spec_strategy() -> impl Strategy<Value = SequenceSpec> {
    (prop_oneof![Just(Protocol::PulsePol), Just(Protocol::Novel)], 0.8..2.0f64, 1u32..=2)
        .prop_map(|(p, tau, n_pol)| SequenceSpec::new(p, tau, n_pol))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn coherent_matches_joint_evolution(nv in any::<bool>(), larmor in 0.3..1.2f64, nuclei in nuclei_strategy(), spec in spec_strategy()) {
        let sys = system(nv, larmor, &nuclei);
        let u = sequence_unitary(&sys, &spec).unwrap();
        let run = Propagation::new(&sys, &spec).unwrap().run(RunMode::Coherent, REPS).unwrap();
        let mut rho = maximally_mixed(sys.nuclear_count());
        for rep in 1..=REPS {
            rho = naive_step(&u, &rho);
            let signed = signed_from(&rho);
            for (a, b) in signed.iter().zip(&run.signed_polarization[rep]) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
        let fast = run.final_state.density().unwrap();
        prop_assert!(fast.max_abs_diff(&rho) < 1e-10);
    }

    #[test]
    fn incoherent_matches_diag_iteration(nv in any::<bool>(), larmor in 0.3..1.2f64, nuclei in nuclei_strategy(), spec in spec_strategy()) {
        let sys = system(nv, larmor, &nuclei);
        let channel = sequence_channel(&sequence_unitary(&sys, &spec).unwrap(), &sys.electron).unwrap();
        let run = Propagation::new(&sys, &spec).unwrap().run(RunMode::Incoherent, REPS).unwrap();
        let mut rho = DensityMatrix::new(maximally_mixed(sys.nuclear_count())).unwrap();
        for rep in 1..=REPS {
            rho = decohere_diag(&apply_channel(&rho, &channel).unwrap());
            for (a, b) in signed_from(&rho).iter().zip(&run.signed_polarization[rep]) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
        for (a, b) in rho.populations().iter().zip(run.final_state.populations()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn disentangle_matches_joint_evolution(larmor in 0.3..1.2f64, nuclei in nuclei_strategy(), tau in 0.8..2.0f64, theta in 0.0..std::f64::consts::PI) {
        let sys = system(true, larmor, &nuclei);
        let spec = SequenceSpec::new(Protocol::PulsePol, tau, 1).with_disentangle(theta, None);
        let u = sequence_unitary(&sys, &spec).unwrap();
        let wait = spec.disentangle_wait().unwrap();
        let run = Propagation::new(&sys, &spec).unwrap().run(RunMode::CoherentWithDisentangle, 20).unwrap();
        let mut rho = maximally_mixed(sys.nuclear_count());
        for rep in 1..=20 {
            rho = naive_disentangle(&sys, theta, wait, &naive_step(&u, &rho));
            for (a, b) in signed_from(&rho).iter().zip(&run.signed_polarization[rep]) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kraus_channel_equals_partial_trace(entries in prop::collection::vec(-1.0..1.0f64, 64), state in prop::collection::vec(-1.0..1.0f64, 32)) {
        let u = unitary_from(8, &entries);
        let rho = state_from(4, &state);
        let sys = system(false, 1.0, &[(0.0, 0.1), (0.0, 0.1)]);
        let channel = sequence_channel(&u, &sys.electron).unwrap();
        prop_assert!(channel.completeness_residual() < 1e-10);
        let fast = apply_channel(&DensityMatrix::new(rho.clone()).unwrap(), &channel).unwrap();
        prop_assert!(fast.max_abs_diff(&naive_step(&u, &rho)) < 1e-12);
    }

    #[test]
    fn markov_matrix_matches_brute_force(entries in prop::collection::vec(-1.0..1.0f64, 64), weights in prop::collection::vec(0.01..1.0f64, 4)) {
        let u = unitary_from(8, &entries);
        let sys = system(false, 1.0, &[(0.0, 0.1), (0.0, 0.1)]);
        let channel = sequence_channel(&u, &sys.electron).unwrap();
        let markov = incoherent_markov(&channel).unwrap();
        let total: f64 = weights.iter().sum();
        let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let rho = DensityMatrix::new(ComplexMatrix::from_diagonal(&p.iter().map(|&x| x.into()).collect::<Vec<_>>())).unwrap();
        let brute = apply_channel(&rho, &channel).unwrap().populations();
        for (a, b) in markov.apply(&p).iter().zip(&brute) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for j in 0..4 {
            let sum: f64 = (0..4).map(|i| markov.get(i, j)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
            prop_assert!((0..4).all(|i| markov.get(i, j) >= 0.0));
        }
    }
}

#[test]
fn uncoupled_pulsepol_markov_is_identity() {
    let sys = system(false, 1.0, &[(0.05, 0.0), (-0.1, 0.0)]);
    let spec = SequenceSpec::resonant(Protocol::PulsePol, 1.0, 1);
    let channel = sequence_channel(&sequence_unitary(&sys, &spec).unwrap(), &sys.electron).unwrap();
    let m = incoherent_markov(&channel).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!((m.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}
