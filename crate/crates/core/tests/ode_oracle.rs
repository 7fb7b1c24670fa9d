//! The propagator against an adaptive Dormand–Prince integration of the
//! Schrödinger equation with an independently assembled Hamiltonian.

mod common;

use nqn_core::model::{ChainConfig, Order, C6_RB70S};
use nqn_core::propagator::{PropagationOptions, Propagator, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{oracle, random_schedule};

#[test]
fn propagator_matches_dormand_prince() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let chains = [(1, Order::Z2), (3, Order::Z2), (4, Order::Z3), (5, Order::Z2), (5, Order::Z4)];
    let mut worst: f64 = 0.0;
    for &(n, order) in &chains {
        for _ in 0..3 {
            let ratio = rng.gen_range(0.4..1.0);
            let c = ChainConfig::with_spacing_ratio(n, ratio, C6_RB70S, order, 1.0).unwrap();
            let s = random_schedule(&mut rng);
            let psi = StateVector::basis(c.disordered());
            let got = Propagator::new(&c)
                .unwrap()
                .propagate(&psi, &s, 0.0, s.total_duration(), &PropagationOptions::default())
                .unwrap()
                .final_state;
            let want = oracle(n, c.spacing(), &s, &psi);
            let dist = got.amplitudes().iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(dist);
            assert!(dist <= 1e-6, "N = {n}, a/R_b = {ratio}: distance {dist:e}");
        }
    }
    println!("largest distance to the oracle: {worst:e}");
}
