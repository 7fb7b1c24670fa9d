//! Ground-state phase map over (Δ/Ω, R_b/a) from exact diagonalisation of
//! short open chains.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::local_occupations;
use crate::error::{Error, Result};
use crate::hamiltonian::build_full;
use crate::model::ChainConfig;
use crate::propagator::StateVector;
use crate::spectrum::eigensystem;

/// Minimum structure-factor peak of an ordered phase.
pub const MIN_ORDER: f64 = 0.05;
/// Minimum filling n_tot/N of an ordered phase.
pub const MIN_FILLING: f64 = 0.1;
/// S(π/2)/S(π) above which a period-2 peak is read as period 4.
pub const Z4_RATIO: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "disordered")]
    Disordered,
    Z2,
    Z3,
    Z4,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Disordered => "disordered",
            Phase::Z2 => "Z2",
            Phase::Z3 => "Z3",
            Phase::Z4 => "Z4",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disordered" => Ok(Phase::Disordered),
            "Z2" => Ok(Phase::Z2),
            "Z3" => Ok(Phase::Z3),
            "Z4" => Ok(Phase::Z4),
            _ => Err(Error::InvalidConfig { field: "label", reason: format!("unknown phase {s:?}") }),
        }
    }
}

/// Lowest eigenpair of H at fixed Δ.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: StateVector<f64>,
    /// rad/μs
    pub energy: f64,
    /// The lowest level is (near-)degenerate.
    pub degenerate: bool,
    /// ⟨nᵢ⟩ averaged over the lowest degenerate block.
    pub density: Vec<f64>,
    pub residual: f64,
    pub matrix_norm: f64,
}

/// Ground state at detuning `delta` ((2π)·MHz). On a degenerate lowest
/// level the lowest-index member is returned and flagged.
pub fn ground_state(config: &ChainConfig<f64>, delta: f64) -> Result<GroundState> {
    let h = build_full(config, config.omega(), delta)?;
    let frame = eigensystem(&h, 0.0)?;
    let block = frame.degenerate_blocks().into_iter().next().unwrap_or(0..1);
    let n = config.n_atoms();
    let mut density = vec![0.0; n];
    let mut state = None;
    for j in block.clone() {
        let psi = StateVector::from_real(n, frame.vector(j))?;
        for (d, o) in density.iter_mut().zip(local_occupations(&psi)) {
            *d += o / block.len() as f64;
        }
        state.get_or_insert(psi);
    }
    Ok(GroundState {
        state: state.expect("non-empty block"),
        energy: frame.values()[0],
        degenerate: block.len() > 1,
        density,
        residual: frame.residual(&h),
        matrix_norm: frame.matrix_norm(),
    })
}

/// Label and peak structure factor of a density profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseClass {
    pub label: Phase,
    pub order_strength: f64,
    /// S(π), S(2π/3), S(π/2)
    pub structure_factor: [f64; 3],
    pub filling: f64,
}

/// S(q) = |Σⱼ e^{iqj} nⱼ|² / N²
pub fn structure_factor(density: &[f64], q: f64) -> f64 {
    let n = density.len() as f64;
    let s: Complex64 = density.iter().enumerate().map(|(j, &d)| Complex64::from_polar(d, q * j as f64)).sum();
    s.norm_sqr() / (n * n)
}

/// Classifies a density profile. The period with the largest S(q) wins
/// when it exceeds [`MIN_ORDER`] at filling above [`MIN_FILLING`]. A period-4
/// wave also peaks at q = π, so a π peak with S(π/2) ≥ [`Z4_RATIO`]·S(π) is
/// labelled Z4.
pub fn classify_density(density: &[f64]) -> PhaseClass {
    let sf = [structure_factor(density, PI), structure_factor(density, 2.0 * PI / 3.0), structure_factor(density, PI / 2.0)];
    let filling = density.iter().sum::<f64>() / density.len() as f64;
    let mut best = 0;
    for i in 1..3 {
        if sf[i] > sf[best] {
            best = i;
        }
    }
    let peak = sf[best];
    let label = if !(peak > MIN_ORDER && filling > MIN_FILLING) {
        Phase::Disordered
    } else if best == 0 && sf[2] >= Z4_RATIO * sf[0] {
        Phase::Z4
    } else {
        [Phase::Z2, Phase::Z3, Phase::Z4][best]
    };
    PhaseClass { label, order_strength: peak.min(1.0), structure_factor: sf, filling }
}

/// Classifies a state by its local densities.
pub fn classify_phase(state: &StateVector<f64>) -> PhaseClass {
    classify_density(&local_occupations(state))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub delta_over_omega: f64,
    pub rb_over_a: f64,
    pub label: Phase,
    pub order_strength: f64,
}

/// Chain with the template's atoms, C₆ and Ω at spacing R_b/`rb_over_a`.
pub fn chain_at(template: &ChainConfig<f64>, rb_over_a: f64) -> Result<ChainConfig<f64>> {
    if !(rb_over_a > 0.0) {
        return Err(Error::config("rb_over_a", "must be positive"));
    }
    template.with_spacing(template.blockade_radius() / rb_over_a)
}

/// Ground-state phase at one grid point.
pub fn phase_point(template: &ChainConfig<f64>, delta_over_omega: f64, rb_over_a: f64) -> Result<PhasePoint> {
    let config = chain_at(template, rb_over_a)?;
    let gs = ground_state(&config, delta_over_omega * config.omega())?;
    let class = classify_density(&gs.density);
    Ok(PhasePoint { delta_over_omega, rb_over_a, label: class.label, order_strength: class.order_strength })
}

/// Phase map over the product grid, row-major in `rb_over_a` then
/// `delta_over_omega`.
pub fn scan(template: &ChainConfig<f64>, deltas_over_omega: &[f64], rb_over_a: &[f64]) -> Result<Vec<PhasePoint>> {
    if deltas_over_omega.is_empty() || rb_over_a.is_empty() {
        return Err(Error::config("grid", "grid must be non-empty"));
    }
    let cells: Vec<(f64, f64)> =
        rb_over_a.iter().flat_map(|&r| deltas_over_omega.iter().map(move |&d| (d, r))).collect();
    cells.par_iter().map(|&(d, r)| phase_point(template, d, r)).collect()
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
