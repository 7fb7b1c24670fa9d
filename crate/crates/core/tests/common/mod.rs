//! Adaptive Dormand–Prince integration of the Schrödinger equation with an
//! independently assembled Hamiltonian.

use std::f64::consts::TAU;

use nqn_core::model::{OmegaEnvelope, PulseSchedule, C6_RB70S};
use nqn_core::propagator::StateVector;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Hamiltonian pieces in rad/μs, assembled from the pair potential.
struct Chain {
    n: usize,
    diag_int: Vec<f64>,
    pop: Vec<f64>,
}

impl Chain {
    fn new(n: usize, spacing: f64) -> Self {
        let dim = 1usize << n;
        let mut diag_int = vec![0.0; dim];
        let mut pop = vec![0.0; dim];
        for b in 0..dim {
            let occ: Vec<usize> = (0..n).filter(|&i| (b >> (n - 1 - i)) & 1 == 1).collect();
            pop[b] = occ.len() as f64;
            for (x, &i) in occ.iter().enumerate() {
                for &j in &occ[x + 1..] {
                    let r = (j - i) as f64 * spacing;
                    diag_int[b] += TAU * C6_RB70S / r.powi(6);
                }
            }
        }
        Self { n, diag_int, pop }
    }

    /// dψ/dt = −i H(t) ψ
    fn rhs(&self, s: &PulseSchedule<f64>, t: f64, psi: &[Complex64]) -> Vec<Complex64> {
        let (omega, delta) = s.evaluate(t.clamp(0.0, s.total_duration())).unwrap();
        let half = TAU * omega / 2.0;
        let delta = TAU * delta;
        (0..psi.len())
            .map(|b| {
                let mut h = psi[b] * (self.diag_int[b] - delta * self.pop[b]);
                for k in 0..self.n {
                    h += psi[b ^ (1 << k)] * half;
                }
                Complex64::new(h.im, -h.re)
            })
            .collect()
    }
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Adaptive Dormand–Prince from `t0` to `t1` with local error below `tol`.
fn dopri(chain: &Chain, s: &PulseSchedule<f64>, t0: f64, t1: f64, mut psi: Vec<Complex64>, tol: f64) -> Vec<Complex64> {
    let mut t = t0;
    let mut h = (t1 - t0).min(1e-3);
    while t < t1 {
        h = h.min(t1 - t);
        let mut k: Vec<Vec<Complex64>> = Vec::with_capacity(7);
        for stage in 0..7 {
            let y: Vec<Complex64> = (0..psi.len())
                .map(|i| psi[i] + (0..stage).map(|j| k[j][i] * (A[stage][j] * h)).sum::<Complex64>())
                .collect();
            k.push(chain.rhs(s, t + C[stage] * h, &y));
        }
        let comb = |b: &[f64; 7]| -> Vec<Complex64> {
            (0..psi.len()).map(|i| psi[i] + (0..7).map(|j| k[j][i] * (b[j] * h)).sum::<Complex64>()).collect()
        };
        let (y5, y4) = (comb(&B5), comb(&B4));
        let err = y5.iter().zip(&y4).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if err <= tol {
            t += h;
            psi = y5;
        }
        h *= (0.9 * (tol / err.max(1e-300)).powf(0.2)).clamp(0.2, 5.0);
    }
    psi
}

pub fn oracle(n: usize, spacing: f64, schedule: &PulseSchedule<f64>, psi: &StateVector<f64>) -> Vec<Complex64> {
    let chain = Chain::new(n, spacing);
    let mut y = psi.amplitudes().to_vec();
    // integrate kink to kink so every piece is smooth
    for w in schedule.breakpoints().windows(2) {
        y = dopri(&chain, schedule, w[0], w[1], y, 1e-13);
    }
    y
}

pub fn random_schedule(rng: &mut ChaCha8Rng) -> PulseSchedule<f64> {
    let segs = rng.gen_range(2..=8);
    let tau = rng.gen_range(0.5..2.0);
    let times = (0..=segs).map(|k| tau * k as f64 / segs as f64).collect();
    let deltas = (0..=segs).map(|_| rng.gen_range(-12.0..12.0)).collect();
    let ramp = if rng.gen_bool(0.5) { rng.gen_range(0.02..0.1) } else { 0.0 };
    let idle = if rng.gen_bool(0.5) { 0.15 } else { 0.0 };
    let env = OmegaEnvelope { rise: ramp, hold: rng.gen_range(0.5..1.5), fall: ramp, idle_lead: idle, idle_tail: idle };
    PulseSchedule::new(times, deltas, env).unwrap()
}
