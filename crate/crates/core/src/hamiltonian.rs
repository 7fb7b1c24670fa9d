//! The chain Hamiltonian
//!
//! H = Σᵢ (Ω/2 σˣᵢ − Δ nᵢ) + Σ_{i<j} V_ij nᵢ nⱼ,   V_ij = C₆ / (|i − j| a)⁶
//!
//! as a dense matrix (for eigen-analysis) and as a structured sparse
//! operator over an optional energy-truncated subspace (for propagation).
//! Matrices are in rad/μs; inputs are in (2π)·MHz.

use crate::error::{Error, Result};
use crate::model::{angular, site_bit, BareState, ChainConfig};
use crate::scalar::Real;

/// Largest chain the dense builders accept by default.
pub const DENSE_CAP_ATOMS: usize = 14;

/// C₆ / (|i − j| a)⁶ in (2π)·MHz for one-based sites `i`, `j`.
pub fn pair_interaction<T: Real>(i: usize, j: usize, config: &ChainConfig<T>) -> Result<T> {
    let n = config.n_atoms();
    for s in [i, j] {
        if s == 0 || s > n {
            return Err(Error::SiteOutOfRange { site: s, n_atoms: n });
        }
    }
    if i == j {
        return Err(Error::SameSite(i));
    }
    Ok(distance_interaction(config, i.abs_diff(j)))
}

#[inline]
fn distance_interaction<T: Real>(config: &ChainConfig<T>, d: usize) -> T {
    config.c6() / (T::from_usize_lossy(d) * config.spacing()).powi(6)
}

/// Interaction energy Σ_{i<j} V_ij nᵢ nⱼ of every bare state, (2π)·MHz.
pub fn bare_interactions<T: Real>(config: &ChainConfig<T>) -> Vec<T> {
    let n = config.n_atoms();
    let by_distance: Vec<T> = (0..n).map(|d| if d == 0 { T::zero() } else { distance_interaction(config, d) }).collect();
    let mut sites = Vec::with_capacity(n);
    (0..config.dim())
        .map(|b| {
            sites.clear();
            sites.extend((0..n).filter(|&s| site_bit(b, s, n)));
            let mut e = T::zero();
            for (x, &si) in sites.iter().enumerate() {
                for &sj in &sites[x + 1..] {
                    e += by_distance[sj - si];
                }
            }
            e
        })
        .collect()
}

/// Interaction energy of one bare state, (2π)·MHz.
pub fn bare_interaction<T: Real>(state: BareState, config: &ChainConfig<T>) -> T {
    let n = config.n_atoms();
    let sites: Vec<usize> = (0..n).filter(|&s| state.is_excited(s)).collect();
    let mut e = T::zero();
    for (x, &si) in sites.iter().enumerate() {
        for &sj in &sites[x + 1..] {
            e += distance_interaction(config, sj - si);
        }
    }
    e
}

/// Bare (Ω = 0) energy ⟨b|H|b⟩ = −Δ·popcount(b) + V_b in (2π)·MHz.
pub fn bare_energy<T: Real>(state: BareState, config: &ChainConfig<T>, delta: T) -> T {
    bare_interaction(state, config) - delta * T::from_usize_lossy(state.excitations() as usize)
}

/// Dense real-symmetric matrix, row-major, in rad/μs.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> HamiltonianMatrix<T> {
    pub fn from_row_major(dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.dim + c]
    }
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, x: T) {
        self.data[r * self.dim + c] = x;
    }
    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// max |H − Hᵀ|.
    pub fn hermiticity_residual(&self) -> T {
        let n = self.dim;
        let mut worst = T::zero();
        for r in 0..n {
            for c in 0..r {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Largest absolute row sum, an upper bound on the spectral norm.
    pub fn norm_bound(&self) -> T {
        (0..self.dim)
            .map(|r| self.data[r * self.dim..(r + 1) * self.dim].iter().map(|x| x.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Principal submatrix on the given basis rows/columns, in that order.
    pub fn project(&self, rows: &[usize]) -> Self {
        let m = rows.len();
        let mut out = Self::zeros(m);
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in rows.iter().enumerate() {
                out.set(i, j, self.get(r, c));
            }
        }
        out
    }

    /// y = H x for a real vector.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|r| self.data[r * self.dim..(r + 1) * self.dim].iter().zip(x).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }
}

/// Full 2ᴺ × 2ᴺ Hamiltonian at fixed (Ω, Δ) given in (2π)·MHz.
pub fn build_full<T: Real>(config: &ChainConfig<T>, omega: T, delta: T) -> Result<HamiltonianMatrix<T>> {
    build_full_capped(config, omega, delta, DENSE_CAP_ATOMS)
}

pub fn build_full_capped<T: Real>(
    config: &ChainConfig<T>,
    omega: T,
    delta: T,
    cap_atoms: usize,
) -> Result<HamiltonianMatrix<T>> {
    let n = config.n_atoms();
    if n > cap_atoms {
        return Err(Error::DimensionCap { n_atoms: n, cap: cap_atoms });
    }
    let dim = config.dim();
    let half_rabi = angular(omega) / T::lit(2.0);
    let delta = angular(delta);
    let interactions = bare_interactions(config);
    let mut h = HamiltonianMatrix::zeros(dim);
    for b in 0..dim {
        let pop = T::from_usize_lossy(b.count_ones() as usize);
        h.set(b, b, angular(interactions[b]) - delta * pop);
        for s in 0..n {
            h.set(b, b ^ (1 << s), half_rabi);
        }
    }
    Ok(h)
}

/// The five-level model of a three-atom chain in the basis
/// |000⟩, |100⟩, |010⟩, |001⟩, |101⟩, with only the couplings among those
/// states. `v_nn` is the nearest-neighbour interaction; |101⟩ carries the
/// next-nearest-neighbour shift V/64.
pub fn build_reduced5<T: Real>(omega: T, delta: T, v_nn: T) -> HamiltonianMatrix<T> {
    let g = angular(omega) / T::lit(2.0);
    let d = angular(delta);
    let v = angular(v_nn);
    let z = T::zero();
    #[rustfmt::skip]
    let data = vec![
        z, g, g, g, z,
        g, -d, z, z, g,
        g, z, -d, z, z,
        g, z, z, -d, g,
        z, g, z, g, -(d + d) + v / T::lit(64.0),
    ];
    HamiltonianMatrix { dim: 5, data }
}

/// Bare states of [`build_reduced5`], in row order.
pub fn reduced5_basis() -> [BareState; 5] {
    ["000", "100", "010", "001", "101"].map(|s| BareState::from_bits(s).expect("static bits"))
}

const NONE: u32 = u32::MAX;

/// Sparse form of H restricted to a set of bare states.
///
/// The subspace keeps every bare state whose interaction energy is at or
/// below `cutoff` ((2π)·MHz); `None` keeps the full Hilbert space. The
/// operator stores, per kept state, its excitation number, its interaction
/// energy and the kept neighbours reached by a single spin flip.
#[derive(Clone, Debug)]
pub struct ChainOperator<T> {
    n_atoms: usize,
    full_dim: usize,
    basis: Vec<u32>,
    position: Vec<u32>,
    popcount: Vec<T>,
    interaction: Vec<T>,
    // CSR adjacency; row i lists first the neighbours with one more
    // excitation, then those with one fewer, split at `split[i]`
    row_ptr: Vec<u32>,
    split: Vec<u32>,
    adj: Vec<u32>,
    cutoff: Option<T>,
}

impl<T: Real> ChainOperator<T> {
    pub fn new(config: &ChainConfig<T>, cutoff: Option<T>) -> Result<Self> {
        let n = config.n_atoms();
        if n > 24 {
            return Err(Error::DimensionCap { n_atoms: n, cap: 24 });
        }
        let full_dim = config.dim();
        let energies = bare_interactions(config);
        let basis: Vec<u32> = (0..full_dim)
            .filter(|&b| cutoff.is_none_or(|c| energies[b] <= c))
            .map(|b| b as u32)
            .collect();
        let mut position = vec![NONE; full_dim];
        for (i, &b) in basis.iter().enumerate() {
            position[b as usize] = i as u32;
        }
        let mut row_ptr = Vec::with_capacity(basis.len() + 1);
        let mut split = Vec::with_capacity(basis.len());
        let mut adj = Vec::with_capacity(basis.len() * n);
        for &b in &basis {
            row_ptr.push(adj.len() as u32);
            for gain in [true, false] {
                if !gain {
                    split.push(adj.len() as u32);
                }
                for s in 0..n {
                    let bit = 1u32 << (n - 1 - s);
                    if (b & bit == 0) == gain {
                        let p = position[(b ^ bit) as usize];
                        if p != NONE {
                            adj.push(p);
                        }
                    }
                }
            }
        }
        row_ptr.push(adj.len() as u32);
        let popcount = basis.iter().map(|&b| T::from_usize_lossy(b.count_ones() as usize)).collect();
        let interaction = basis.iter().map(|&b| angular(energies[b as usize])).collect();
        Ok(Self { n_atoms: n, full_dim, basis, position, popcount, interaction, row_ptr, split, adj, cutoff })
    }

    #[inline]
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }
    /// Number of kept bare states.
    #[inline]
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    #[inline]
    pub fn full_dim(&self) -> usize {
        self.full_dim
    }
    #[inline]
    pub fn is_truncated(&self) -> bool {
        self.basis.len() != self.full_dim
    }
    pub fn cutoff(&self) -> Option<T> {
        self.cutoff
    }
    /// Kept bare indices, ascending.
    #[inline]
    pub fn basis(&self) -> &[u32] {
        &self.basis
    }
    /// Position of bare index `b` in the kept basis.
    #[inline]
    pub fn position(&self, b: usize) -> Option<usize> {
        match self.position[b] {
            NONE => None,
            p => Some(p as usize),
        }
    }
    #[inline]
    pub(crate) fn popcount(&self) -> &[T] {
        &self.popcount
    }
    /// Interaction energies of the kept states in rad/μs.
    #[inline]
    pub(crate) fn interaction(&self) -> &[T] {
        &self.interaction
    }
    /// Kept single-flip neighbours of kept state `i`: those gaining an
    /// excitation, then those losing one.
    #[inline]
    pub(crate) fn neighbours(&self, i: usize) -> (&[u32], &[u32]) {
        let (a, m, b) = (self.row_ptr[i] as usize, self.split[i] as usize, self.row_ptr[i + 1] as usize);
        (&self.adj[a..m], &self.adj[m..b])
    }
    /// Number of stored single-flip links.
    pub fn n_links(&self) -> usize {
        self.adj.len()
    }
}
