//! Scalar observables of a chain state: target fidelity, bare (Λ) and
//! adiabatic (Γ) projections, the staggered order parameter ΔS, the total
//! Rydberg population and the site occupations, plus the readout-error
//! model for measured fidelities.

use crate::error::{Error, Result};
use crate::hamiltonian::build_full;
use crate::model::{non_adiabatic_basis, parse_roman, BareState, ChainConfig, PulseSchedule};
use crate::propagator::{PropagationOptions, Propagator, StateVector};
use crate::scalar::Real;
use crate::spectrum::{column_projections, eigensystem, EigenFrame};

/// Per-atom readout infidelity used by [`measured_fidelity`] by default.
pub const DEFAULT_READOUT_ERROR: f64 = 0.08;

/// |⟨target|ψ⟩|².
pub fn fidelity<T: Real>(state: &StateVector<T>, target: BareState) -> T {
    state.amplitude(target).norm_sqr()
}

/// Λ_b = |⟨b|ψ⟩|² for every bare index b.
pub fn bare_projections<T: Real>(state: &StateVector<T>) -> Vec<T> {
    state.amplitudes().iter().map(|z| z.norm_sqr()).collect()
}

/// Λ over the Roman-labelled non-adiabatic basis of `config`.
pub fn named_projections<T: Real>(
    state: &StateVector<T>,
    config: &ChainConfig<T>,
) -> Result<Vec<(String, BareState, T)>> {
    Ok(non_adiabatic_basis(config.n_atoms(), config.order())?
        .into_iter()
        .map(|(label, b)| {
            let p = fidelity(state, b);
            (label, b, p)
        })
        .collect())
}

/// Γ for one adiabatic label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdiabaticProjection<T> {
    pub label: usize,
    pub column: usize,
    pub probability: T,
    /// Sum over the degenerate block containing this eigenvector.
    pub block_probability: T,
    /// Member of a degenerate block: `probability` depends on the basis
    /// chosen inside the block and only `block_probability` is physical.
    pub degenerate: bool,
}

/// Γ_n = |⟨E_n|ψ⟩|², keyed by tracked label and sorted by label.
pub fn adiabatic_projections<T: Real>(
    state: &StateVector<T>,
    frame: &EigenFrame<T>,
) -> Result<Vec<AdiabaticProjection<T>>> {
    let probs = column_projections(state, frame)?;
    let mut out = Vec::with_capacity(probs.len());
    for block in frame.degenerate_blocks() {
        let sum: T = probs[block.clone()].iter().copied().sum();
        let degenerate = block.len() > 1;
        for j in block {
            out.push(AdiabaticProjection {
                label: frame.labels()[j],
                column: j,
                probability: probs[j],
                block_probability: sum,
                degenerate,
            });
        }
    }
    out.sort_by_key(|p| p.label);
    Ok(out)
}

/// Γ indexed by ascending energy rather than tracked label.
pub fn adiabatic_projections_by_energy<T: Real>(state: &StateVector<T>, frame: &EigenFrame<T>) -> Result<Vec<T>> {
    column_projections(state, frame)
}

/// ⟨nᵢ⟩ for sites 1..N (index 0 is atom 1).
pub fn local_occupations<T: Real>(state: &StateVector<T>) -> Vec<T> {
    let n = state.n_atoms();
    let mut occ = vec![T::zero(); n];
    for (b, z) in state.amplitudes().iter().enumerate() {
        let p = z.norm_sqr();
        if p == T::zero() {
            continue;
        }
        for (s, o) in occ.iter_mut().enumerate() {
            if (b >> (n - 1 - s)) & 1 == 1 {
                *o += p;
            }
        }
    }
    occ
}

/// (ΔS, n_tot): odd-site minus even-site population (atoms counted from 1),
/// and the total population.
pub fn order_parameter<T: Real>(state: &StateVector<T>) -> (T, T) {
    staggered(&local_occupations(state))
}

pub(crate) fn staggered<T: Real>(occ: &[T]) -> (T, T) {
    let mut ds = T::zero();
    for (s, &o) in occ.iter().enumerate() {
        // site index s is atom s + 1
        if s % 2 == 0 {
            ds += o;
        } else {
            ds -= o;
        }
    }
    (ds, occ.iter().copied().sum())
}

/// Fidelity seen through imperfect readout: ideal·(1 − ε)^{(N+1)/2}, for
/// odd chains whose Z₂ target has (N+1)/2 excitations.
pub fn measured_fidelity<T: Real>(ideal: T, n_atoms: usize, per_atom_error: T) -> Result<T> {
    if n_atoms % 2 == 0 {
        return Err(Error::EvenChain(n_atoms));
    }
    if !(per_atom_error >= T::zero() && per_atom_error <= T::one()) {
        return Err(Error::config("per_atom_error", format!("must lie in [0, 1], got {per_atom_error}")));
    }
    Ok(ideal * (T::one() - per_atom_error).powi(((n_atoms + 1) / 2) as i32))
}

/// All observables of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSet<T> {
    pub fidelity: T,
    /// Λ over the full bare basis, by index.
    pub lambda: Vec<T>,
    /// Γ by tracked label; empty when no frame was supplied.
    pub gamma: Vec<AdiabaticProjection<T>>,
    pub delta_s: T,
    pub n_tot: T,
    pub local_n: Vec<T>,
}

impl<T: Real> ObservableSet<T> {
    pub fn measure(state: &StateVector<T>, target: BareState, frame: Option<&EigenFrame<T>>) -> Result<Self> {
        let local_n = local_occupations(state);
        let (delta_s, n_tot) = staggered(&local_n);
        let gamma = match frame {
            Some(f) => adiabatic_projections(state, f)?,
            None => Vec::new(),
        };
        Ok(Self { fidelity: fidelity(state, target), lambda: bare_projections(state), gamma, delta_s, n_tot, local_n })
    }
}

/// A named scalar observable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Observable {
    /// `F`: fidelity to the configured target.
    Fidelity,
    /// `Lambda_I`, `Lambda_101`, …
    Lambda(BareState),
    /// `Gamma_5`: Γ for tracked label 5.
    Gamma(usize),
    /// `Gamma_max`: the largest Γ.
    GammaMax,
    /// `Gamma_argmax`: label of the largest Γ.
    GammaArgmax,
    /// `DeltaS`
    DeltaS,
    /// `n_tot`
    NTot,
    /// `n_3`: occupation of atom 3.
    Site(usize),
}

impl Observable {
    /// Parses a column name for a chain described by `config`.
    pub fn parse<T: Real>(name: &str, config: &ChainConfig<T>) -> Result<Self> {
        let unknown = || Error::UnknownObservable(name.to_string());
        let n = config.n_atoms();
        Ok(match name {
            "F" => Observable::Fidelity,
            "DeltaS" => Observable::DeltaS,
            "n_tot" => Observable::NTot,
            "Gamma_max" => Observable::GammaMax,
            "Gamma_argmax" => Observable::GammaArgmax,
            _ => {
                if let Some(rest) = name.strip_prefix("Lambda_") {
                    if rest.len() == n && rest.chars().all(|c| c == '0' || c == '1') {
                        Observable::Lambda(BareState::from_bits(rest)?)
                    } else {
                        let k = parse_roman(rest).ok_or_else(unknown)?;
                        let basis = non_adiabatic_basis(n, config.order())?;
                        let (_, b) = basis.get(k - 1).ok_or_else(unknown)?;
                        Observable::Lambda(*b)
                    }
                } else if let Some(rest) = name.strip_prefix("Gamma_") {
                    let m: usize = rest.parse().map_err(|_| unknown())?;
                    if m == 0 || m > config.dim() {
                        return Err(unknown());
                    }
                    Observable::Gamma(m)
                } else if let Some(rest) = name.strip_prefix("n_") {
                    let i: usize = rest.parse().map_err(|_| unknown())?;
                    if i == 0 || i > n {
                        return Err(unknown());
                    }
                    Observable::Site(i)
                } else {
                    return Err(unknown());
                }
            }
        })
    }

    pub fn needs_frame(&self) -> bool {
        matches!(self, Observable::Gamma(_) | Observable::GammaMax | Observable::GammaArgmax)
    }
}

/// Observable columns sampled over time; the first column is `t_us`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T> {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<T>>,
}

impl<T: Real> TimeSeries<T> {
    pub fn column(&self, name: &str) -> Option<Vec<T>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Evaluates observables on a stream of states, keeping the eigenframe
/// labels tracked between calls.
#[derive(Debug)]
pub struct ObservableRecorder<T> {
    config: ChainConfig<T>,
    observables: Vec<Observable>,
    names: Vec<String>,
    frame: Option<EigenFrame<T>>,
}

impl<T: Real> ObservableRecorder<T> {
    pub fn new<S: AsRef<str>>(config: &ChainConfig<T>, names: &[S]) -> Result<Self> {
        let observables = names
            .iter()
            .map(|n| Observable::parse(n.as_ref(), config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            observables,
            names: names.iter().map(|n| n.as_ref().to_string()).collect(),
            frame: None,
        })
    }

    pub fn columns(&self) -> Vec<String> {
        std::iter::once("t_us".to_string()).chain(self.names.iter().cloned()).collect()
    }

    /// Eigenframe of the most recent sample, if Γ was requested.
    pub fn frame(&self) -> Option<&EigenFrame<T>> {
        self.frame.as_ref()
    }

    pub fn record(&mut self, t: T, state: &StateVector<T>, schedule: &PulseSchedule<T>) -> Result<Vec<T>> {
        let mut gamma = Vec::new();
        if self.observables.iter().any(Observable::needs_frame) {
            let (omega, delta) = schedule.evaluate(t)?;
            let mut frame = eigensystem(&build_full(&self.config, omega, delta)?, t)?;
            if let Some(prev) = &self.frame {
                frame.track_from(prev)?;
            }
            gamma = adiabatic_projections(state, &frame)?;
            self.frame = Some(frame);
        }
        let needs_sites = self.observables.iter().any(|o| matches!(o, Observable::DeltaS | Observable::NTot | Observable::Site(_)));
        let occ = if needs_sites { local_occupations(state) } else { Vec::new() };
        let (ds, ntot) = staggered(&occ);
        let best = gamma
            .iter()
            .fold(None::<&AdiabaticProjection<T>>, |m, g| match m {
                Some(b) if b.probability >= g.probability => Some(b),
                _ => Some(g),
            });
        let mut row = Vec::with_capacity(self.observables.len() + 1);
        row.push(t);
        for o in &self.observables {
            row.push(match o {
                Observable::Fidelity => fidelity(state, self.config.target()),
                Observable::Lambda(b) => fidelity(state, *b),
                Observable::Gamma(m) => gamma.iter().find(|g| g.label == *m).map_or(T::zero(), |g| g.probability),
                Observable::GammaMax => best.map_or(T::zero(), |g| g.probability),
                Observable::GammaArgmax => best.map_or(T::zero(), |g| T::from_usize_lossy(g.label)),
                Observable::DeltaS => ds,
                Observable::NTot => ntot,
                Observable::Site(i) => occ[i - 1],
            });
        }
        Ok(row)
    }
}

/// Propagates `state` and evaluates the named observables at each sorted
/// sample time. Only the current state is kept in memory.
pub fn propagate_with_observables<T: Real, S: AsRef<str>>(
    propagator: &Propagator<T>,
    config: &ChainConfig<T>,
    state: &StateVector<T>,
    schedule: &PulseSchedule<T>,
    sample_times: &[T],
    observables: &[S],
    opts: &PropagationOptions<T>,
) -> Result<TimeSeries<T>> {
    let mut recorder = ObservableRecorder::new(config, observables)?;
    let mut rows = Vec::with_capacity(sample_times.len());
    propagator.for_each_sample(state, schedule, sample_times, opts, |t, s| {
        rows.push(recorder.record(t, s, schedule)?);
        Ok(())
    })?;
    Ok(TimeSeries { columns: recorder.columns(), rows })
}

/// Times `start, start + step, …` followed by `end` itself.
pub fn sample_grid<T: Real>(start: T, end: T, step: T) -> Vec<T> {
    if !(step > T::zero()) || !(end > start) {
        return vec![start];
    }
    let n = ((end - start) / step - T::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
    let mut out: Vec<T> = (0..n).map(|i| start + step * T::from_usize_lossy(i)).collect();
    out.push(end);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OmegaEnvelope, Order, C6_RB70S};
    use num_complex::Complex;

    fn chain(n: usize) -> ChainConfig<f64> {
        ChainConfig::new(n, 5.0, C6_RB70S, Order::Z2, 1.0).unwrap()
    }

    #[test]
    fn fidelity_examples() {
        let t = BareState::from_bits("10101").unwrap();
        assert_eq!(fidelity(&StateVector::<f64>::basis(t), t), 1.0);
        assert_eq!(fidelity(&StateVector::<f64>::basis(BareState::vacuum(5)), t), 0.0);
    }

    #[test]
    fn projections_of_vacuum_and_superposition() {
        let c = chain(3);
        let d = StateVector::<f64>::basis(BareState::vacuum(3));
        let named = named_projections(&d, &c).unwrap();
        assert_eq!(named[0].0, "I");
        assert_eq!(named[0].2, 1.0);
        assert!(named[1..].iter().all(|x| x.2 == 0.0));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![Complex::new(0.0, 0.0); 8];
        amps[1] = Complex::new(h, 0.0);
        amps[6] = Complex::new(0.0, -h);
        let s = StateVector::from_amplitudes(3, amps).unwrap();
        let l = bare_projections(&s);
        assert!((l[1] - 0.5).abs() < 1e-15 && (l[6] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn order_parameter_examples() {
        assert_eq!(order_parameter(&StateVector::<f64>::basis(BareState::vacuum(3))), (0.0, 0.0));
        let z2 = StateVector::<f64>::basis(BareState::from_bits("1010101").unwrap());
        assert_eq!(order_parameter(&z2), (4.0, 4.0));
        let s = StateVector::<f64>::basis(BareState::from_bits("010").unwrap());
        assert_eq!(order_parameter(&s), (-1.0, 1.0));
    }

    #[test]
    fn measured_fidelity_values() {
        assert!((measured_fidelity(1.0f64, 3, 0.08).unwrap() - 0.8464).abs() < 1e-12);
        assert!((measured_fidelity(1.0f64, 7, 0.08).unwrap() - 0.716_392_96).abs() < 1e-12);
        assert_eq!(measured_fidelity(0.37, 5, 0.0).unwrap(), 0.37);
        assert!(matches!(measured_fidelity(1.0, 4, 0.08), Err(Error::EvenChain(4))));
    }

    #[test]
    fn ground_vector_has_unit_gamma_one() {
        let c = chain(3);
        let f = eigensystem(&build_full(&c, 1.0, 0.7).unwrap(), 0.0).unwrap();
        let g = StateVector::from_real(3, f.vector(0)).unwrap();
        let p = adiabatic_projections(&g, &f).unwrap();
        assert_eq!(p[0].label, 1);
        assert!((p[0].probability - 1.0).abs() < 1e-12);
        let total: f64 = p.iter().map(|x| x.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_blocks_are_flagged() {
        // free atoms at Δ = 0, no interaction to speak of: binomial degeneracy
        let c = ChainConfig::new(3, 1e4, C6_RB70S, Order::Z2, 1.0).unwrap();
        let f = eigensystem(&build_full(&c, 1.0, 0.0).unwrap(), 0.0).unwrap();
        let s = StateVector::basis(BareState::vacuum(3));
        let p = adiabatic_projections(&s, &f).unwrap();
        assert!(p.iter().filter(|x| x.degenerate).count() >= 6);
        let blocks: f64 = f.degenerate_blocks().iter().map(|b| p.iter().find(|x| x.column == b.start).unwrap().block_probability).sum();
        assert!((blocks - 1.0).abs() < 1e-12);
    }

    #[test]
    fn observable_names() {
        let c = chain(3);
        assert_eq!(Observable::parse("F", &c).unwrap(), Observable::Fidelity);
        assert_eq!(Observable::parse("Lambda_V", &c).unwrap(), Observable::Lambda(BareState::from_bits("101").unwrap()));
        assert_eq!(Observable::parse("Lambda_110", &c).unwrap(), Observable::Lambda(BareState::from_bits("110").unwrap()));
        assert_eq!(Observable::parse("Gamma_5", &c).unwrap(), Observable::Gamma(5));
        assert_eq!(Observable::parse("n_3", &c).unwrap(), Observable::Site(3));
        for bad in ["G", "Lambda_VI", "Gamma_0", "Gamma_9", "n_4", "n_0", "Lambda_1x1", ""] {
            assert!(matches!(Observable::parse(bad, &c), Err(Error::UnknownObservable(_))), "{bad}");
        }
    }

    #[test]
    fn zero_duration_series_is_initial_state() {
        let c = chain(3);
        let s = PulseSchedule::uniform(1.0, -12.0, &[3.0, -3.0], 12.0, OmegaEnvelope::constant(1.0)).unwrap();
        let p = Propagator::new(&c).unwrap();
        let psi = StateVector::basis(c.disordered());
        let names = ["F", "Lambda_I", "Gamma_1", "DeltaS", "n_tot"];
        let ts = propagate_with_observables(&p, &c, &psi, &s, &[0.0], &names, &PropagationOptions::default()).unwrap();
        assert_eq!(ts.columns[0], "t_us");
        assert_eq!(ts.rows.len(), 1);
        let r = &ts.rows[0];
        assert_eq!(r[1], 0.0);
        assert_eq!(r[2], 1.0);
        assert!(r[3] > 0.99);
        assert_eq!((r[4], r[5]), (0.0, 0.0));
        assert!(propagate_with_observables(&p, &c, &psi, &s, &[0.0], &["bogus"], &PropagationOptions::default()).is_err());
    }

    #[test]
    fn sampled_series_ends_at_final_state() {
        let c = chain(3);
        let s = PulseSchedule::uniform(1.0, -12.0, &[3.0, -3.0], 12.0, OmegaEnvelope::constant(1.0)).unwrap();
        let p = Propagator::new(&c).unwrap();
        let psi = StateVector::basis(c.disordered());
        let opts = PropagationOptions::default();
        let times = sample_grid(0.0, 1.0, 0.01);
        assert_eq!(times.len(), 101);
        let ts = propagate_with_observables(&p, &c, &psi, &s, &times, &["F", "Gamma_max"], &opts).unwrap();
        let direct = p.propagate(&psi, &s, 0.0, 1.0, &opts).unwrap();
        let f_end = *ts.column("F").unwrap().last().unwrap();
        assert!((f_end - fidelity(&direct.final_state, c.target())).abs() < 1e-7);
    }
}
