//! Invariants of the propagator, Hamiltonian and projections on random
//! chains, schedules and states.

use nqn_core::diagnostics::{adiabatic_projections, bare_projections};
use nqn_core::hamiltonian::{build_full, build_reduced5, reduced5_basis};
use nqn_core::model::{ChainConfig, OmegaEnvelope, Order, PulseSchedule, C6_RB70S};
use nqn_core::propagator::{PropagationOptions, Propagator, StateVector};
use nqn_core::spectrum::eigensystem;
use num_complex::Complex64;
use proptest::prelude::*;

fn chain(n: usize, ratio: f64) -> ChainConfig<f64> {
    ChainConfig::with_spacing_ratio(n, ratio, C6_RB70S, Order::Z2, 1.0).unwrap()
}

fn random_state(n: usize, parts: &[(f64, f64)]) -> StateVector<f64> {
    let dim = 1 << n;
    let amps: Vec<Complex64> = (0..dim).map(|i| Complex64::new(parts[i % parts.len()].0, parts[(i * 7 + 3) % parts.len()].1)).collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(n, amps.into_iter().map(|z| z / norm).collect()).unwrap()
}

prop_compose! {
    fn schedules()(
        segs in 2usize..6,
        tau in 0.4f64..2.0,
        deltas in prop::collection::vec(-15.0f64..15.0, 7),
        idle in prop_oneof![Just(0.0), 0.01f64..0.2],
        ramp in prop_oneof![Just(0.0), 0.01f64..0.1],
        hold in 0.3f64..1.5,
    ) -> PulseSchedule<f64> {
        let times: Vec<f64> = (0..=segs).map(|k| tau * k as f64 / segs as f64).collect();
        let env = OmegaEnvelope { rise: ramp, hold, fall: ramp, idle_lead: idle, idle_tail: idle };
        PulseSchedule::with_floor(times, deltas[..=segs].to_vec(), env, 0.0).unwrap()
    }
}

fn atoms() -> impl Strategy<Value = usize> {
    prop_oneof![Just(1usize), Just(3), Just(5)]
}

fn amplitudes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 11).prop_filter("non-zero", |v| v.iter().any(|p| p.0.abs() > 0.1))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn norm_is_conserved(n in atoms(), ratio in 0.45f64..1.0, s in schedules(), parts in amplitudes()) {
        let c = chain(n, ratio);
        let psi = random_state(n, &parts);
        let out = Propagator::new(&c).unwrap()
            .propagate(&psi, &s, 0.0, s.total_duration(), &PropagationOptions::default()).unwrap();
        prop_assert!((out.final_state.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn conjugate_backward_run_undoes_forward_run(n in atoms(), ratio in 0.45f64..1.0, s in schedules(), parts in amplitudes()) {
        let c = chain(n, ratio);
        let p = Propagator::new(&c).unwrap();
        let psi = random_state(n, &parts);
        let opts = PropagationOptions::default();
        let end = s.total_duration();
        let fwd = p.propagate(&psi, &s, 0.0, end, &opts).unwrap().final_state;
        let back = p.propagate(&fwd.conj(), &s.time_reversed(), 0.0, end, &opts).unwrap().final_state.conj();
        prop_assert!(back.distance(&psi) < 1e-6, "{}", back.distance(&psi));
    }

    #[test]
    fn propagation_composes(n in atoms(), ratio in 0.45f64..1.0, s in schedules(), cut in 0.05f64..0.95) {
        let c = chain(n, ratio);
        let p = Propagator::new(&c).unwrap();
        let psi = StateVector::basis(c.disordered());
        let opts = PropagationOptions::default();
        let end = s.total_duration();
        let mid = cut * end;
        let whole = p.propagate(&psi, &s, 0.0, end, &opts).unwrap().final_state;
        let half = p.propagate(&psi, &s, 0.0, mid, &opts).unwrap().final_state;
        let two = p.propagate(&half, &s, mid, end, &opts).unwrap().final_state;
        prop_assert!(two.distance(&whole) < 1e-6, "{}", two.distance(&whole));
    }

    #[test]
    fn hamiltonian_is_symmetric(n in 1usize..=7, ratio in 0.3f64..1.5, omega in 0.0f64..3.0, delta in -20.0f64..20.0) {
        let c = ChainConfig::with_spacing_ratio(n, ratio, C6_RB70S, Order::new(2).unwrap(), 1.0);
        prop_assume!(c.is_ok());
        let h = build_full(&c.unwrap(), omega, delta).unwrap();
        prop_assert!(h.hermiticity_residual() <= 1e-12 * h.norm_bound().max(1.0));
    }

    #[test]
    fn projections_are_complete(n in atoms(), ratio in 0.45f64..1.0, omega in 0.0f64..2.0, delta in -15.0f64..15.0, parts in amplitudes()) {
        let c = chain(n, ratio);
        let psi = random_state(n, &parts);
        let lambda: f64 = bare_projections(&psi).iter().sum();
        prop_assert!((lambda - 1.0).abs() < 1e-9);
        let frame = eigensystem(&build_full(&c, omega, delta).unwrap(), 0.0).unwrap();
        let gamma: f64 = adiabatic_projections(&psi, &frame).unwrap().iter().map(|g| g.probability).sum();
        prop_assert!((gamma - 1.0).abs() < 1e-9);
    }

    #[test]
    fn five_level_model_is_a_block_of_the_full_matrix(ratio in 0.4f64..1.2, omega in 0.1f64..3.0, delta in -20.0f64..20.0) {
        let c = ChainConfig::with_spacing_ratio(3, ratio, C6_RB70S, Order::Z2, omega).unwrap();
        let full = build_full(&c, omega, delta).unwrap();
        let rows: Vec<usize> = reduced5_basis().iter().map(|b| b.index()).collect();
        let block = full.project(&rows);
        let reduced = build_reduced5(omega, delta, c.nn_interaction());
        for r in 0..5 {
            for k in 0..5 {
                prop_assert!((block.get(r, k) - reduced.get(r, k)).abs() <= 1e-12 * block.norm_bound(),
                    "({r},{k}): {} vs {}", block.get(r, k), reduced.get(r, k));
            }
        }
    }
}
