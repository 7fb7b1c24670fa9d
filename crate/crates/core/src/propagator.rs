//! Time evolution of |ψ(t)⟩ under a [`PulseSchedule`].
//!
//! The time axis is cut at every control kink, so Ω(t) and Δ(t) are linear
//! on each piece. Each piece is split into equal substeps; on a substep the
//! propagator applies the exact exponential of a constant Hermitian
//! generator built at the substep midpoint:
//!
//! * [`Integrator::Midpoint`]: the generator is H(t_mid) (second order);
//! * [`Integrator::Magnus4`]: H(t_mid) + (i h²/12)[H(t_mid), Ḣ], the
//!   fourth-order Magnus generator for a linearly varying H. The commutator
//!   only touches the single-flip couplings, so the generator has the same
//!   sparsity as H.
//!
//! The exponential itself is a Chebyshev expansion truncated below 1e-18,
//! so every substep is unitary to rounding. Step sizes are refined by
//! halving until two successive results agree within the tolerance.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::hamiltonian::ChainOperator;
use crate::linalg;
use crate::model::{angular, BareState, ChainConfig, PulseSchedule};
use crate::scalar::Real;

pub const DEFAULT_TOL: f64 = 1e-8;
const NORM_SLACK: f64 = 1e-8;

/// Complex amplitudes over the 2ᴺ bare basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    n_atoms: usize,
    amps: Vec<Complex<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn from_amplitudes(n_atoms: usize, amps: Vec<Complex<T>>) -> Result<Self> {
        if amps.len() != 1 << n_atoms {
            return Err(Error::DimensionMismatch { expected: 1 << n_atoms, found: amps.len() });
        }
        Ok(Self { n_atoms, amps })
    }

    pub fn basis(state: BareState) -> Self {
        let mut amps = vec![Complex::new(T::zero(), T::zero()); 1 << state.n_atoms()];
        amps[state.index()] = Complex::new(T::one(), T::zero());
        Self { n_atoms: state.n_atoms(), amps }
    }

    /// Normalised real vector, e.g. an eigenvector.
    pub fn from_real(n_atoms: usize, v: &[T]) -> Result<Self> {
        let amps = v.iter().map(|&x| Complex::new(x, T::zero())).collect();
        let mut s = Self::from_amplitudes(n_atoms, amps)?;
        s.normalize();
        Ok(s)
    }

    #[inline]
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }
    #[inline]
    pub fn dim(&self) -> usize {
        self.amps.len()
    }
    #[inline]
    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }
    #[inline]
    pub fn amplitude(&self, state: BareState) -> Complex<T> {
        self.amps[state.index()]
    }

    pub fn norm(&self) -> T {
        linalg::norm_sqr(&self.amps).sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > T::zero() {
            self.amps.iter_mut().for_each(|z| *z = *z / n);
        }
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        linalg::inner(&self.amps, &other.amps)
    }

    pub fn distance(&self, other: &Self) -> T {
        linalg::distance(&self.amps, &other.amps)
    }

    pub fn conj(&self) -> Self {
        Self { n_atoms: self.n_atoms, amps: self.amps.iter().map(|z| z.conj()).collect() }
    }

    /// Multiplies by a global phase e^{iφ}.
    pub fn with_phase(&self, phi: T) -> Self {
        let p = Complex::from_polar(T::one(), phi);
        Self { n_atoms: self.n_atoms, amps: self.amps.iter().map(|z| z * p).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Integrator {
    Midpoint,
    #[default]
    Magnus4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationOptions<T> {
    /// L2 tolerance between successive step refinements.
    pub tol: T,
    pub integrator: Integrator,
    /// First step size tried, μs.
    pub initial_step: T,
    pub max_refinements: usize,
}

impl<T: Real> Default for PropagationOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(DEFAULT_TOL),
            integrator: Integrator::Magnus4,
            initial_step: T::lit(0.02),
            max_refinements: 16,
        }
    }
}

impl<T: Real> PropagationOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct PropagationResult<T> {
    pub final_state: StateVector<T>,
    /// Snapshots at strictly increasing times, from `t_start` to `t_end`.
    pub trace: Vec<(T, StateVector<T>)>,
    pub substeps_used: usize,
    /// Accepted substep length, μs.
    pub step: T,
    /// Difference between the last two refinements.
    pub error_estimate: T,
}

/// Propagates states of one chain, optionally in an energy-truncated
/// subspace.
#[derive(Clone, Debug)]
pub struct Propagator<T> {
    op: ChainOperator<T>,
}

struct Workspace<T> {
    phi_prev: Vec<Complex<T>>,
    phi: Vec<Complex<T>>,
    phi_next: Vec<Complex<T>>,
    acc: Vec<Complex<T>>,
    diag: Vec<T>,
    bessel: Vec<f64>,
}

impl<T: Real> Workspace<T> {
    fn new(dim: usize) -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Self {
            phi_prev: vec![z; dim],
            phi: vec![z; dim],
            phi_next: vec![z; dim],
            acc: vec![z; dim],
            diag: vec![T::zero(); dim],
            bessel: Vec::new(),
        }
    }
}

/// Controls on one substep, angular units.
#[derive(Clone, Copy, Debug)]
struct StepControls<T> {
    omega: T,
    delta: T,
    omega_rate: T,
    delta_rate: T,
    h: T,
}

impl<T: Real> Propagator<T> {
    /// Full Hilbert space.
    pub fn new(config: &ChainConfig<T>) -> Result<Self> {
        Ok(Self { op: ChainOperator::new(config, None)? })
    }

    /// Keeps only bare states with interaction energy ≤ `cutoff` ((2π)·MHz).
    pub fn truncated(config: &ChainConfig<T>, cutoff: T) -> Result<Self> {
        Ok(Self { op: ChainOperator::new(config, Some(cutoff))? })
    }

    pub fn from_operator(op: ChainOperator<T>) -> Self {
        Self { op }
    }

    pub fn operator(&self) -> &ChainOperator<T> {
        &self.op
    }

    /// Adaptive propagation from `t_start` to `t_end` (absolute schedule
    /// time).
    pub fn propagate(
        &self,
        state: &StateVector<T>,
        schedule: &PulseSchedule<T>,
        t_start: T,
        t_end: T,
        opts: &PropagationOptions<T>,
    ) -> Result<PropagationResult<T>> {
        self.check_request(state, schedule, t_start, t_end, opts.tol)?;
        let start = self.gather(state)?;
        let (sub, h, steps, err) = self.refine(&start, schedule, t_start, t_end, opts)?;
        let final_state = self.scatter(&sub);
        Ok(PropagationResult {
            trace: vec![(t_start, state.clone()), (t_end, final_state.clone())],
            final_state,
            substeps_used: steps,
            step: h,
            error_estimate: err,
        })
    }

    /// Propagation with a fixed maximal substep length `h` (no refinement).
    pub fn propagate_fixed(
        &self,
        state: &StateVector<T>,
        schedule: &PulseSchedule<T>,
        t_start: T,
        t_end: T,
        h: T,
        integrator: Integrator,
    ) -> Result<StateVector<T>> {
        self.check_request(state, schedule, t_start, t_end, h)?;
        let mut psi = self.gather(state)?;
        let mut ws = Workspace::new(self.op.dim());
        self.evolve(&mut psi, schedule, t_start, t_end, h, integrator, &[], &mut ws, |_, _| {})?;
        Ok(self.scatter(&psi))
    }

    /// Snapshots at each of the sorted `sample_times`. The step is chosen
    /// adaptively over the whole window before sampling.
    pub fn propagate_sampled(
        &self,
        state: &StateVector<T>,
        schedule: &PulseSchedule<T>,
        sample_times: &[T],
        opts: &PropagationOptions<T>,
    ) -> Result<Vec<(T, StateVector<T>)>> {
        let mut out = Vec::with_capacity(sample_times.len());
        self.for_each_sample(state, schedule, sample_times, opts, |t, s| {
            out.push((t, s.clone()));
            Ok(())
        })?;
        Ok(out)
    }

    /// Visits the state at each sorted sample time without keeping history.
    pub fn for_each_sample<F>(
        &self,
        state: &StateVector<T>,
        schedule: &PulseSchedule<T>,
        sample_times: &[T],
        opts: &PropagationOptions<T>,
        mut visit: F,
    ) -> Result<usize>
    where
        F: FnMut(T, &StateVector<T>) -> Result<()>,
    {
        let Some((&first, &last)) = sample_times.first().zip(sample_times.last()) else {
            return Ok(0);
        };
        if sample_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSchedule("sample times must increase strictly".into()));
        }
        check_norm(state)?;
        check_window(schedule, first, last)?;
        if !(opts.tol > T::zero()) {
            return Err(Error::InvalidTolerance(opts.tol.as_f64()));
        }
        let start = self.gather(state)?;
        if first == last {
            visit(first, state)?;
            return Ok(0);
        }
        let (_, h, _, _) = self.refine(&start, schedule, first, last, opts)?;
        let mut psi = start;
        let mut ws = Workspace::new(self.op.dim());
        let mut failure = None;
        let steps = self.evolve(
            &mut psi,
            schedule,
            first,
            last,
            h,
            opts.integrator,
            sample_times,
            &mut ws,
            |t, sub| {
                if failure.is_none() {
                    if let Err(e) = visit(t, &self.scatter(sub)) {
                        failure = Some(e);
                    }
                }
            },
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(steps),
        }
    }

    fn check_request(
        &self,
        state: &StateVector<T>,
        schedule: &PulseSchedule<T>,
        t_start: T,
        t_end: T,
        tol: T,
    ) -> Result<()> {
        if !(tol > T::zero()) {
            return Err(Error::InvalidTolerance(tol.as_f64()));
        }
        if state.n_atoms() != self.op.n_atoms() {
            return Err(Error::DimensionMismatch { expected: self.op.full_dim(), found: state.dim() });
        }
        check_norm(state)?;
        if !(t_start < t_end) {
            return Err(Error::InvalidSchedule(format!(
                "propagation window [{t_start}, {t_end}] is empty"
            )));
        }
        check_window(schedule, t_start, t_end)
    }

    fn gather(&self, state: &StateVector<T>) -> Result<Vec<Complex<T>>> {
        if state.dim() != self.op.full_dim() {
            return Err(Error::DimensionMismatch { expected: self.op.full_dim(), found: state.dim() });
        }
        let amps = state.amplitudes();
        if !self.op.is_truncated() {
            return Ok(amps.to_vec());
        }
        let sub: Vec<Complex<T>> = self.op.basis().iter().map(|&b| amps[b as usize]).collect();
        let outside = T::one() - linalg::norm_sqr(&sub) / linalg::norm_sqr(amps);
        if outside > T::lit(1e-12) {
            return Err(Error::OutsideSubspace(outside.as_f64()));
        }
        Ok(sub)
    }

    fn scatter(&self, sub: &[Complex<T>]) -> StateVector<T> {
        let n = self.op.n_atoms();
        if !self.op.is_truncated() {
            return StateVector { n_atoms: n, amps: sub.to_vec() };
        }
        let mut amps = vec![Complex::new(T::zero(), T::zero()); self.op.full_dim()];
        for (z, &b) in sub.iter().zip(self.op.basis()) {
            amps[b as usize] = *z;
        }
        StateVector { n_atoms: n, amps }
    }

    /// Halves the step until successive results agree. Returns the refined
    /// subspace state, the accepted step, the substep count and the last
    /// difference.
    fn refine(
        &self,
        start: &[Complex<T>],
        schedule: &PulseSchedule<T>,
        t_start: T,
        t_end: T,
        opts: &PropagationOptions<T>,
    ) -> Result<(Vec<Complex<T>>, T, usize, T)> {
        let mut ws = Workspace::new(self.op.dim());
        let mut h = opts.initial_step.min(t_end - t_start);
        let mut coarse = start.to_vec();
        self.evolve(&mut coarse, schedule, t_start, t_end, h, opts.integrator, &[], &mut ws, |_, _| {})?;
        let mut last_err = T::infinity();
        for _ in 0..opts.max_refinements {
            h = h / T::lit(2.0);
            let mut fine = start.to_vec();
            let steps =
                self.evolve(&mut fine, schedule, t_start, t_end, h, opts.integrator, &[], &mut ws, |_, _| {})?;
            last_err = linalg::distance(&coarse, &fine);
            if last_err < opts.tol {
                return Ok((fine, h, steps, last_err));
            }
            coarse = fine;
        }
        Err(Error::Convergence(format!(
            "step refinement stalled at h = {h} us with difference {:e} (tol {})",
            last_err.as_f64(),
            opts.tol
        )))
    }

    /// Fixed-step evolution of a subspace vector. `samples` must be sorted;
    /// `visit` fires at each sample inside `[t_start, t_end]`.
    #[allow(clippy::too_many_arguments)]
    fn evolve<F>(
        &self,
        psi: &mut [Complex<T>],
        schedule: &PulseSchedule<T>,
        t_start: T,
        t_end: T,
        h: T,
        integrator: Integrator,
        samples: &[T],
        ws: &mut Workspace<T>,
        mut visit: F,
    ) -> Result<usize>
    where
        F: FnMut(T, &[Complex<T>]),
    {
        let pieces = pieces(schedule, t_start, t_end, h, samples);
        let mut sample_iter = samples.iter().copied().peekable();
        let mut emit = |t: T, psi: &[Complex<T>], visit: &mut F| {
            while let Some(&s) = sample_iter.peek() {
                if s < t {
                    sample_iter.next();
                } else {
                    if s == t {
                        visit(t, psi);
                        sample_iter.next();
                    }
                    break;
                }
            }
        };
        emit(t_start, psi, &mut visit);

        let mut steps = 0usize;
        for p in &pieces {
            for j in 0..p.n_sub {
                self.step(psi, p.controls(j), integrator, ws);
            }
            steps += p.n_sub;
            emit(p.b, psi, &mut visit);
        }
        Ok(steps)
    }

    /// Applies the adjoint of the fixed-step evolution over `[t_start,
    /// t_end]`, last substep first. `visit` fires at every piece boundary,
    /// from `t_end` down to `t_start`.
    #[allow(clippy::too_many_arguments)]
    fn evolve_adjoint<F>(
        &self,
        psi: &mut [Complex<T>],
        schedule: &PulseSchedule<T>,
        t_start: T,
        t_end: T,
        h: T,
        integrator: Integrator,
        ws: &mut Workspace<T>,
        mut visit: F,
    ) where
        F: FnMut(T, &[Complex<T>]),
    {
        visit(t_end, psi);
        for p in pieces(schedule, t_start, t_end, h, &[]).iter().rev() {
            for j in (0..p.n_sub).rev() {
                // exp(iGh) ψ = conj(exp(−iG*h) conj ψ), and G* flips the
                // sign of the rate terms
                let mut ctl = p.controls(j);
                ctl.omega_rate = -ctl.omega_rate;
                ctl.delta_rate = -ctl.delta_rate;
                psi.iter_mut().for_each(|z| *z = z.conj());
                self.step(psi, ctl, integrator, ws);
                psi.iter_mut().for_each(|z| *z = z.conj());
            }
            visit(p.a, psi);
        }
    }

    /// Fixed-step states at every kink of `schedule` from `state`, in the
    /// propagator's (possibly truncated) basis.
    pub(crate) fn kink_states(
        &self,
        state: &StateVector<T>,
        schedule: &PulseSchedule<T>,
        h: T,
        integrator: Integrator,
    ) -> Result<Vec<(T, Vec<Complex<T>>)>> {
        let kinks = schedule.breakpoints();
        let mut psi = self.gather(state)?;
        let mut out = Vec::with_capacity(kinks.len());
        let mut ws = Workspace::new(self.op.dim());
        let (t0, t1) = (kinks[0], kinks[kinks.len() - 1]);
        self.evolve(&mut psi, schedule, t0, t1, h, integrator, &kinks, &mut ws, |t, s| out.push((t, s.to_vec())))?;
        Ok(out)
    }

    /// Like [`Propagator::kink_states`] for the adjoint evolution of a
    /// final state, in increasing time order.
    pub(crate) fn adjoint_kink_states(
        &self,
        state: &StateVector<T>,
        schedule: &PulseSchedule<T>,
        h: T,
        integrator: Integrator,
    ) -> Result<Vec<(T, Vec<Complex<T>>)>> {
        let kinks = schedule.breakpoints();
        let mut psi = self.gather(state)?;
        let mut out = Vec::with_capacity(kinks.len());
        let mut ws = Workspace::new(self.op.dim());
        let (t0, t1) = (kinks[0], kinks[kinks.len() - 1]);
        self.evolve_adjoint(&mut psi, schedule, t0, t1, h, integrator, &mut ws, |t, s| out.push((t, s.to_vec())));
        out.reverse();
        Ok(out)
    }

    /// Fixed-step evolution of a subspace vector between two kinks.
    pub(crate) fn evolve_between(
        &self,
        psi: &mut [Complex<T>],
        schedule: &PulseSchedule<T>,
        t_start: T,
        t_end: T,
        h: T,
        integrator: Integrator,
    ) -> Result<()> {
        let mut ws = Workspace::new(self.op.dim());
        self.evolve(psi, schedule, t_start, t_end, h, integrator, &[], &mut ws, |_, _| {})?;
        Ok(())
    }

    fn step(&self, psi: &mut [Complex<T>], ctl: StepControls<T>, integrator: Integrator, ws: &mut Workspace<T>) {
        let pop = self.op.popcount();
        let inter = self.op.interaction();
        for (d, (&v, &p)) in ws.diag.iter_mut().zip(inter.iter().zip(pop)) {
            *d = v - ctl.delta * p;
        }
        let magnus = integrator == Integrator::Magnus4;
        if ctl.omega == T::zero() && (!magnus || ctl.omega_rate == T::zero()) {
            for (z, &d) in psi.iter_mut().zip(&ws.diag) {
                *z = *z * Complex::from_polar(T::one(), -d * ctl.h);
            }
            return;
        }
        let half = ctl.omega / T::lit(2.0);
        let h2 = ctl.h * ctl.h / T::lit(12.0);
        let (c_pop, c_diag) = if magnus {
            (-h2 * ctl.omega * ctl.delta_rate / T::lit(2.0), h2 * ctl.omega_rate / T::lit(2.0))
        } else {
            (T::zero(), T::zero())
        };
        let diag = std::mem::take(&mut ws.diag);
        let gen = Generator { op: &self.op, diag: &diag, half, c_pop, c_diag };

        let (dmin, dmax) = diag.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let coupling = half.abs() + c_pop.abs() + c_diag.abs() * (dmax - dmin);
        let radius = T::from_usize_lossy(self.op.n_atoms()) * coupling;
        let lo = dmin - radius;
        let hi = dmax + radius;
        let center = (hi + lo) / T::lit(2.0);
        let half_width = ((hi - lo) / T::lit(2.0)).max(T::lit(1e-12));
        chebyshev_expm(&gen, psi, center, half_width, ctl.h, ws);
        ws.diag = diag;
    }
}

/// One stretch between consecutive cuts, where Ω and Δ are linear.
struct Piece<T> {
    a: T,
    b: T,
    n_sub: usize,
    hs: T,
    om: (T, T),
    de: (T, T),
    om_rate: T,
    de_rate: T,
}

impl<T: Real> Piece<T> {
    fn controls(&self, j: usize) -> StepControls<T> {
        let n = T::from_usize_lossy(self.n_sub);
        let w = (T::from_usize_lossy(j) + T::lit(0.5)) / n;
        let om = self.om.0 * (T::one() - w) + self.om.1 * w;
        let de = self.de.0 * (T::one() - w) + self.de.1 * w;
        StepControls {
            omega: angular(om),
            delta: angular(de),
            omega_rate: self.om_rate,
            delta_rate: self.de_rate,
            h: self.hs,
        }
    }
}

/// Cuts `[t_start, t_end]` at the schedule kinks and `samples`.
fn pieces<T: Real>(schedule: &PulseSchedule<T>, t_start: T, t_end: T, h: T, samples: &[T]) -> Vec<Piece<T>> {
    let mut cuts: Vec<T> = schedule
        .breakpoints()
        .into_iter()
        .chain(samples.iter().copied())
        .filter(|&t| t > t_start && t < t_end)
        .collect();
    cuts.push(t_start);
    cuts.push(t_end);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    cuts.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let len = b - a;
            let n = (len / h - T::lit(1e-9)).ceil().max(T::one());
            // controls are linear on the open piece; sample its interior so
            // a jump in Ω at an idle boundary does not leak in
            let (q1, q3) = (a + len * T::lit(0.25), a + len * T::lit(0.75));
            let (om_q1, om_q3) = (schedule.omega_at(q1), schedule.omega_at(q3));
            let (de_q1, de_q3) = (schedule.delta_at(q1), schedule.delta_at(q3));
            let om = (om_q1 * T::lit(1.5) - om_q3 * T::lit(0.5), om_q3 * T::lit(1.5) - om_q1 * T::lit(0.5));
            let de = (de_q1 * T::lit(1.5) - de_q3 * T::lit(0.5), de_q3 * T::lit(1.5) - de_q1 * T::lit(0.5));
            Piece {
                a,
                b,
                n_sub: n.to_usize().unwrap_or(1),
                hs: len / n,
                om,
                de,
                om_rate: angular((om.1 - om.0) / len),
                de_rate: angular((de.1 - de.0) / len),
            }
        })
        .collect()
}

fn check_norm<T: Real>(state: &StateVector<T>) -> Result<()> {
    let n = state.norm();
    if !((n - T::one()).abs() <= T::lit(NORM_SLACK)) {
        return Err(Error::NotNormalized(n.as_f64()));
    }
    Ok(())
}

fn check_window<T: Real>(schedule: &PulseSchedule<T>, t_start: T, t_end: T) -> Result<()> {
    let end = schedule.total_duration();
    for t in [t_start, t_end] {
        if !(t >= T::zero() && t <= end) {
            return Err(Error::OutOfRange { t: t.as_f64(), start: 0.0, end: end.as_f64() });
        }
    }
    Ok(())
}

/// Substep generator: diagonal `diag`, and for a flip b → b′ the coupling
/// Ω/2 + i(c_pop·(n_b′ − n_b) + c_diag·(d_b − d_b′)).
struct Generator<'a, T> {
    op: &'a ChainOperator<T>,
    diag: &'a [T],
    half: T,
    c_pop: T,
    c_diag: T,
}

impl<T: Real> Generator<'_, T> {
    /// y = (G x − c x) / r
    fn apply_scaled(&self, x: &[Complex<T>], y: &mut [Complex<T>], center: T, inv_r: T) {
        let zero = Complex::new(T::zero(), T::zero());
        let half = self.half * inv_r;
        let pop = self.c_pop * inv_r;
        if self.c_diag == T::zero() {
            // Ω̇ = 0: coupling is Ω/2 ± i c_pop
            for (i, yi) in y.iter_mut().enumerate() {
                let (up, down) = self.op.neighbours(i);
                let su = up.iter().fold(zero, |s, &j| s + x[j as usize]);
                let sd = down.iter().fold(zero, |s, &j| s + x[j as usize]);
                let sum = su + sd;
                let diff = su - sd;
                *yi = x[i] * ((self.diag[i] - center) * inv_r)
                    + Complex::new(sum.re * half - diff.im * pop, sum.im * half + diff.re * pop);
            }
            return;
        }
        let cd = self.c_diag * inv_r;
        for (i, yi) in y.iter_mut().enumerate() {
            let (up, down) = self.op.neighbours(i);
            let di = self.diag[i];
            let mut acc = x[i] * ((di - center) * inv_r);
            for (links, sgn) in [(up, pop), (down, -pop)] {
                for &j in links {
                    let j = j as usize;
                    let im = sgn + cd * (di - self.diag[j]);
                    acc += x[j] * Complex::new(half, im);
                }
            }
            *yi = acc;
        }
    }
}

/// ψ ← exp(−i G h) ψ with the spectrum of G inside `center ± half_width`.
fn chebyshev_expm<T: Real>(
    gen: &Generator<'_, T>,
    psi: &mut [Complex<T>],
    center: T,
    half_width: T,
    h: T,
    ws: &mut Workspace<T>,
) {
    let z = (half_width * h).as_f64();
    bessel_series(z, &mut ws.bessel);
    let inv_r = T::one() / half_width;
    let n_terms = ws.bessel.len();
    let coeff = |k: usize, jk: f64| -> Complex<T> {
        // (2 − δ_k0)(−i)^k J_k(z)
        let m = if k == 0 { jk } else { 2.0 * jk };
        let m = T::lit(m);
        match k % 4 {
            0 => Complex::new(m, T::zero()),
            1 => Complex::new(T::zero(), -m),
            2 => Complex::new(-m, T::zero()),
            _ => Complex::new(T::zero(), m),
        }
    };
    let Workspace { phi_prev, phi, phi_next, acc, bessel, .. } = ws;
    phi_prev.copy_from_slice(psi);
    let c0 = coeff(0, bessel[0]);
    for (a, p) in acc.iter_mut().zip(phi_prev.iter()) {
        *a = p * c0;
    }
    if n_terms > 1 {
        gen.apply_scaled(phi_prev, phi, center, inv_r);
        let c1 = coeff(1, bessel[1]);
        for (a, p) in acc.iter_mut().zip(phi.iter()) {
            *a += p * c1;
        }
        let two = T::lit(2.0);
        for (k, &jk) in bessel.iter().enumerate().skip(2) {
            gen.apply_scaled(phi, phi_next, center, inv_r);
            let ck = coeff(k, jk);
            for ((nx, pv), a) in phi_next.iter_mut().zip(phi_prev.iter()).zip(acc.iter_mut()) {
                *nx = *nx * two - pv;
                *a += *nx * ck;
            }
            std::mem::swap(phi_prev, phi);
            std::mem::swap(phi, phi_next);
        }
    }
    let phase = Complex::from_polar(T::one(), -center * h);
    for (p, a) in psi.iter_mut().zip(acc.iter()) {
        *p = a * phase;
    }
}

/// J_0(z) … J_K(z), truncated once the terms fall below 1e-18. Miller's
/// backward recurrence normalised by J₀ + 2ΣJ₂ₖ = 1.
fn bessel_series(z: f64, out: &mut Vec<f64>) {
    out.clear();
    if z < 1e-300 {
        out.push(1.0);
        return;
    }
    // first order past z where the Debye-type bound drops below 1e-18
    let target = (1e-18f64).ln();
    let mut k_max = z.ceil() as usize + 1;
    loop {
        let k = k_max as f64;
        let log_bound = k * (std::f64::consts::E * z / (2.0 * k)).ln() - 0.5 * (std::f64::consts::TAU * k).ln();
        if log_bound < target {
            break;
        }
        k_max += 1;
    }
    let start = k_max + 16 + (z.sqrt() as usize);
    let mut vals = vec![0.0f64; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = 2.0 * k as f64 / z * vals[k] - vals[k + 1];
        if vals[k - 1].abs() > 1e250 {
            for v in &mut vals[k - 1..=start] {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = vals[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * vals[k];
    }
    out.extend(vals[..=k_max].iter().map(|v| v / norm));
}
