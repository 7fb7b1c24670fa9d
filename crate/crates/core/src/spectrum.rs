//! Instantaneous eigen-analysis of H(t): sorted eigenpairs, adiabatic labels
//! that survive level crossings, bare-level crossings and Landau–Zener
//! estimates.

use crate::error::{Error, Result};
use crate::hamiltonian::{bare_interaction, build_full, HamiltonianMatrix};
use crate::linalg::{self, symmetric_eigen};
use crate::model::{non_adiabatic_basis, ChainConfig, OmegaEnvelope, PulseSchedule};
use crate::propagator::{PropagationOptions, Propagator, StateVector};
use crate::scalar::Real;

/// Overlap below which a label match is considered ambiguous.
pub const AMBIGUOUS_OVERLAP: f64 = 0.5;
/// Relative gap (in units of ‖H‖) below which eigenvalues form a block.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Eigenpairs of H at one instant, ascending in energy.
///
/// Adiabatic labels are one-based. A frame built on its own labels its
/// columns 1, 2, … in energy order; [`EigenFrame::track_from`] carries the
/// labels of an earlier frame across.
#[derive(Clone, Debug)]
pub struct EigenFrame<T> {
    pub t: T,
    dim: usize,
    values: Vec<T>,
    vectors: Vec<T>,
    norm: T,
    labels: Vec<usize>,
    tracked_index_map: Vec<usize>,
}

impl<T: Real> EigenFrame<T> {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }
    /// Ascending eigenvalues, rad/μs.
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }
    /// Eigenvector of column `j`.
    #[inline]
    pub fn vector(&self, j: usize) -> &[T] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }
    /// Adiabatic label of each column.
    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
    /// Column of the previous frame matched to each column of this one.
    #[inline]
    pub fn tracked_index_map(&self) -> &[usize] {
        &self.tracked_index_map
    }
    /// Column currently carrying adiabatic label `label`.
    pub fn column_of(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }
    /// Norm bound of the diagonalised matrix.
    #[inline]
    pub fn matrix_norm(&self) -> T {
        self.norm
    }

    /// Column ranges of (near-)degenerate eigenvalues.
    pub fn degenerate_blocks(&self) -> Vec<std::ops::Range<usize>> {
        let tol = T::lit(DEGENERACY_TOL) * self.norm.max(T::one());
        let mut blocks = Vec::new();
        let mut start = 0;
        for j in 1..=self.dim {
            if j == self.dim || self.values[j] - self.values[j - 1] > tol {
                blocks.push(start..j);
                start = j;
            }
        }
        blocks
    }

    /// Re-labels this frame by matching its vectors to `prev`.
    pub fn track_from(&mut self, prev: &EigenFrame<T>) -> Result<()> {
        let map = track_adiabatic_labels(prev, self)?;
        self.labels = map.iter().map(|&p| prev.labels[p]).collect();
        self.tracked_index_map = map;
        Ok(())
    }

    /// Largest ‖Hv − Ev‖ over all pairs.
    pub fn residual(&self, h: &HamiltonianMatrix<T>) -> T {
        (0..self.dim)
            .map(|j| {
                let v = self.vector(j);
                h.apply(v)
                    .iter()
                    .zip(v)
                    .map(|(hv, x)| (*hv - self.values[j] * *x).powi(2))
                    .sum::<T>()
                    .sqrt()
            })
            .fold(T::zero(), T::max)
    }
}

/// Full eigendecomposition. Each eigenvector is signed so that its first
/// non-negligible component is positive.
pub fn eigensystem<T: Real>(h: &HamiltonianMatrix<T>, t: T) -> Result<EigenFrame<T>> {
    let norm = h.norm_bound();
    let asym = h.hermiticity_residual();
    if asym > T::lit(1e-12) * norm.max(T::one()) {
        return Err(Error::NotHermitian(asym.as_f64()));
    }
    let dim = h.dim();
    let mut eig = symmetric_eigen(dim, h.as_slice());
    for j in 0..dim {
        let v = &mut eig.vectors[j * dim..(j + 1) * dim];
        let cut = v.iter().fold(T::zero(), |m, x| m.max(x.abs())) * T::lit(1e-8);
        if let Some(first) = v.iter().find(|x| x.abs() > cut) {
            if *first < T::zero() {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    Ok(EigenFrame {
        t,
        dim,
        values: eig.values,
        vectors: eig.vectors,
        norm,
        labels: (1..=dim).collect(),
        tracked_index_map: (0..dim).collect(),
    })
}

/// Matches every column of `next` to a column of `prev`. Pairs are taken
/// greedily by decreasing |overlap| as long as the overlap is at least
/// [`AMBIGUOUS_OVERLAP`]; leftovers are paired in energy order. The result
/// maps each `next` column to its `prev` column and is a permutation.
pub fn track_adiabatic_labels<T: Real>(prev: &EigenFrame<T>, next: &EigenFrame<T>) -> Result<Vec<usize>> {
    if prev.dim != next.dim {
        return Err(Error::DimensionMismatch { expected: prev.dim, found: next.dim });
    }
    let n = prev.dim;
    let threshold = T::lit(AMBIGUOUS_OVERLAP);
    let mut pairs: Vec<(T, usize, usize)> = Vec::new();
    for j in 0..n {
        let vj = next.vector(j);
        for i in 0..n {
            let o = prev.vector(i).iter().zip(vj).map(|(a, b)| *a * *b).sum::<T>().abs();
            if o >= threshold {
                pairs.push((o, j, i));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    const FREE: usize = usize::MAX;
    let mut map = vec![FREE; n];
    let mut taken = vec![false; n];
    for (_, j, i) in pairs {
        if map[j] == FREE && !taken[i] {
            map[j] = i;
            taken[i] = true;
        }
    }
    let mut spare = (0..n).filter(|&i| !taken[i]);
    for slot in map.iter_mut().filter(|m| **m == FREE) {
        *slot = spare.next().expect("as many free rows as free columns");
    }
    Ok(map)
}

/// Eigenframes of H(t) at the sorted `times`, tracked from the first.
pub fn eigenflow<T: Real>(config: &ChainConfig<T>, schedule: &PulseSchedule<T>, times: &[T]) -> Result<Vec<EigenFrame<T>>> {
    let mut frames: Vec<EigenFrame<T>> = Vec::with_capacity(times.len());
    for &t in times {
        let (omega, delta) = schedule.evaluate(t)?;
        let h = build_full(config, omega, delta)?;
        let mut frame = eigensystem(&h, t)?;
        if let Some(prev) = frames.last() {
            frame.track_from(prev)?;
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Detunings ((2π)·MHz) where two bare energies of the non-adiabatic basis
/// cross, ascending and de-duplicated. For three atoms these are 0, V/128
/// and V/64 with V the nearest-neighbour interaction.
pub fn bare_crossings<T: Real>(config: &ChainConfig<T>) -> Result<Vec<T>> {
    let basis = non_adiabatic_basis(config.n_atoms(), config.order())?;
    let levels: Vec<(T, T)> = basis
        .iter()
        .map(|(_, b)| (bare_interaction(*b, config), T::from_usize_lossy(b.excitations() as usize)))
        .collect();
    let mut out: Vec<T> = Vec::new();
    for (x, &(va, na)) in levels.iter().enumerate() {
        for &(vb, nb) in &levels[x + 1..] {
            if na != nb {
                // V_a − Δ n_a = V_b − Δ n_b
                out.push((va - vb) / (na - nb));
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = config.nn_interaction().max(T::one());
    out.dedup_by(|a, b| (*a - *b).abs() <= T::lit(1e-12) * scale);
    Ok(out)
}

/// Absolute times at which the detuning program passes through `delta`.
pub fn crossing_times<T: Real>(schedule: &PulseSchedule<T>, delta: T) -> Vec<T> {
    let lead = schedule.program_start();
    let (ts, ds) = (schedule.knot_times(), schedule.knot_deltas());
    let mut out = Vec::new();
    for k in 0..ts.len() - 1 {
        let (d0, d1) = (ds[k], ds[k + 1]);
        if d0 == d1 {
            continue;
        }
        let w = (delta - d0) / (d1 - d0);
        // count a crossing at a shared knot only once
        if w >= T::zero() && (w < T::one() || (k + 2 == ts.len() && w == T::one())) {
            out.push(lead + ts[k] + w * (ts[k + 1] - ts[k]));
        }
    }
    out
}

/// How the Landau–Zener exponent treats the coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LzConvention {
    /// exp(−2π Ω²/Δ̇) with Ω the full Rabi frequency.
    FullCoupling,
    /// exp(−2π (Ω/2)²/Δ̇), the exact asymptotic result for an off-diagonal
    /// element Ω/2, which is what [`build_full`] produces.
    #[default]
    HalfCoupling,
}

impl LzConvention {
    /// Coefficient c in P = exp(−c Ω²/Δ̇) with Ω in (2π)·MHz and Δ̇ in
    /// (2π)·MHz/μs.
    fn coefficient<T: Real>(self) -> T {
        // angular: 2π (2πΩ)² / (2πΔ̇) = 4π² Ω²/Δ̇
        let full = T::TAU() * T::TAU();
        match self {
            LzConvention::FullCoupling => full,
            LzConvention::HalfCoupling => full / T::lit(4.0),
        }
    }
}

/// Diabatic survival probability for a sweep at `rate` through a crossing
/// with Rabi frequency `omega`.
pub fn landau_zener<T: Real>(omega: T, rate: T, convention: LzConvention) -> Result<T> {
    if !(rate > T::zero()) {
        return Err(Error::NonPositiveRate(rate.as_f64()));
    }
    Ok((-convention.coefficient::<T>() * omega * omega / rate).exp())
}

/// Sweep rate ((2π)·MHz/μs) at which [`landau_zener`] returns `p`.
pub fn landau_zener_rate<T: Real>(omega: T, p: T, convention: LzConvention) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::config("probability", format!("must lie in (0, 1), got {p}")));
    }
    Ok(convention.coefficient::<T>() * omega * omega / -p.ln())
}

/// Simulated diabatic survival of one atom driven from Δ = −`half_range` to
/// +`half_range` at `rate`, starting in |0⟩.
pub fn two_level_sweep<T: Real>(omega: T, rate: T, half_range: T, tol: T) -> Result<T> {
    if !(rate > T::zero()) {
        return Err(Error::NonPositiveRate(rate.as_f64()));
    }
    let config = ChainConfig::new(1, T::one(), T::one(), crate::model::Order::Z2, omega)?;
    let duration = (half_range + half_range) / rate;
    let schedule = PulseSchedule::with_floor(
        vec![T::zero(), duration],
        vec![-half_range, half_range],
        OmegaEnvelope::constant(omega),
        T::zero(),
    )?;
    let psi0 = StateVector::basis(config.disordered());
    let opts = PropagationOptions { tol, initial_step: T::lit(0.05), ..PropagationOptions::default() };
    let out = Propagator::new(&config)?.propagate(&psi0, &schedule, T::zero(), duration, &opts)?;
    Ok(out.final_state.amplitudes()[0].norm_sqr())
}

/// Projection probabilities of `state` onto the eigenvectors of `frame`,
/// by column.
pub(crate) fn column_projections<T: Real>(state: &StateVector<T>, frame: &EigenFrame<T>) -> Result<Vec<T>> {
    if state.dim() != frame.dim {
        return Err(Error::DimensionMismatch { expected: frame.dim, found: state.dim() });
    }
    Ok((0..frame.dim).map(|j| linalg::real_inner(frame.vector(j), state.amplitudes()).norm_sqr()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_reduced5;
    use crate::model::{Order, C6_RB70S};
    use std::f64::consts::PI;

    fn frame(h: &HamiltonianMatrix<f64>) -> EigenFrame<f64> {
        eigensystem(h, 0.0).unwrap()
    }

    #[test]
    fn single_atom_splitting() {
        let c = ChainConfig::new(1, 4.0, C6_RB70S, Order::Z2, 1.0).unwrap();
        let f = frame(&build_full(&c, 1.0, 0.0).unwrap());
        assert!((f.values()[0] + PI).abs() < 1e-12);
        assert!((f.values()[1] - PI).abs() < 1e-12);
        for j in 0..2 {
            assert!(f.vector(j)[0] > 0.0);
        }
    }

    #[test]
    fn reduced_model_ground_state_is_vacuum_at_large_negative_detuning() {
        let f = frame(&build_reduced5(1.0, -12.0, 210.0));
        assert!(f.vector(0)[0].abs() > 0.99);
    }

    #[test]
    fn rejects_asymmetric() {
        let h = HamiltonianMatrix::from_row_major(2, vec![0.0, 1.0, 1.1, 0.0]).unwrap();
        assert!(matches!(eigensystem(&h, 0.0), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn random_reconstruction() {
        let mut x = 0.71f64;
        let mut a = vec![0.0; 25];
        for r in 0..5 {
            for c in 0..=r {
                x = (x * 7.3 + 0.17).fract();
                a[r * 5 + c] = x - 0.5;
                a[c * 5 + r] = x - 0.5;
            }
        }
        let h = HamiltonianMatrix::from_row_major(5, a.clone()).unwrap();
        let f = frame(&h);
        for r in 0..5 {
            for c in 0..5 {
                let back: f64 = (0..5).map(|j| f.values()[j] * f.vector(j)[r] * f.vector(j)[c]).sum();
                assert!((back - a[r * 5 + c]).abs() < 1e-10);
            }
        }
        assert!(f.residual(&h) < 1e-8 * h.norm_bound());
    }

    #[test]
    fn identical_frames_track_to_identity() {
        let f = frame(&build_reduced5(1.0, 0.3, 210.0));
        assert_eq!(track_adiabatic_labels(&f, &f).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn resolved_avoided_crossing_keeps_energy_order() {
        // H = [[0, g], [g, −Δ]] with Δ swept through zero in fine steps
        let g = 0.5;
        let mut prev: Option<EigenFrame<f64>> = None;
        for k in 0..=200 {
            let d = -5.0 + 0.05 * k as f64;
            let h = HamiltonianMatrix::from_row_major(2, vec![0.0, g, g, -d]).unwrap();
            let mut f = frame(&h);
            if let Some(p) = &prev {
                f.track_from(p).unwrap();
                assert_eq!(f.tracked_index_map(), &[0, 1]);
            }
            prev = Some(f);
        }
        assert_eq!(prev.unwrap().labels(), &[1, 2]);
    }

    #[test]
    fn true_crossing_follows_vectors() {
        // uncoupled levels swap order; labels stay with the states
        let a = frame(&HamiltonianMatrix::from_row_major(2, vec![0.0, 0.0, 0.0, 1.0]).unwrap());
        let mut b = frame(&HamiltonianMatrix::from_row_major(2, vec![0.0, 0.0, 0.0, -1.0]).unwrap());
        b.track_from(&a).unwrap();
        assert_eq!(b.tracked_index_map(), &[1, 0]);
        assert_eq!(b.labels(), &[2, 1]);
    }

    #[test]
    fn three_atom_crossings() {
        let c = ChainConfig::new(3, 4.0, C6_RB70S, Order::Z2, 1.0).unwrap();
        let v = c.nn_interaction();
        let x = bare_crossings(&c).unwrap();
        assert_eq!(x, vec![0.0, v / 128.0, v / 64.0]);
        let c2 = ChainConfig::new(3, 4.0, 2.0 * C6_RB70S, Order::Z2, 3.0).unwrap();
        assert_eq!(bare_crossings(&c2).unwrap(), vec![0.0, 2.0 * v / 128.0, 2.0 * v / 64.0]);
    }

    #[test]
    fn crossing_time_on_ramp() {
        let s = PulseSchedule::uniform(1.0, -12.0, &[3.0, -3.0], 12.0, OmegaEnvelope::with_idles(1.0, 0.15)).unwrap();
        let t: Vec<f64> = crossing_times(&s, 0.0);
        assert_eq!(t.len(), 3);
        assert!((t[0] - (0.15 + 12.0 / 15.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn landau_zener_limits_and_inverse() {
        for conv in [LzConvention::FullCoupling, LzConvention::HalfCoupling] {
            assert!(landau_zener(1.0, 1e9, conv).unwrap() > 0.999_999);
            assert!(landau_zener(1.0, 1e-3, conv).unwrap() < 1e-12);
            let r = landau_zener_rate(1.0, 0.82, conv).unwrap();
            assert!((landau_zener(1.0f64, r, conv).unwrap() - 0.82).abs() < 1e-14);
        }
        assert!(landau_zener(1.0, 0.0, LzConvention::FullCoupling).is_err());
        let p: f64 = landau_zener(1.0, 10.0, LzConvention::FullCoupling).unwrap();
        let q: f64 = landau_zener(1.0, 10.0, LzConvention::HalfCoupling).unwrap();
        assert!((p.ln() / q.ln() - 4.0).abs() < 1e-12);
    }
}
