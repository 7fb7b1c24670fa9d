//! Physical instance, bare-basis conventions and the piecewise-linear pulse
//! schedule.
//!
//! Frequencies are carried in "(2π)·MHz" the way hardware datasheets quote
//! them: a value `x` means an angular frequency of `2π·x` rad/μs. Conversion
//! to angular units happens once, when a Hamiltonian or operator is built.
//! Times are in μs and lengths in μm throughout.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Van der Waals coefficient of the 70S Rydberg level of ⁸⁷Rb, (2π)·MHz·μm⁶.
pub const C6_RB70S: f64 = 862_690.0;

/// Smallest segment duration accepted by the hardware waveform generator.
pub const RESOLUTION_FLOOR_US: f64 = 0.05;

/// Lattice spacing, as a fraction of the blockade radius, used when a config
/// does not pin the spacing explicitly. Indexed by order (2, 3, 4).
pub fn default_spacing_over_rb(order: Order) -> f64 {
    match order.get() {
        2 => 0.58,
        3 => 0.36,
        _ => 0.29,
    }
}

/// Converts a (2π)·MHz value to rad/μs.
#[inline]
pub fn angular<T: Real>(mhz: T) -> T {
    mhz * T::TAU()
}

/// Target density-wave period k ∈ {2, 3, 4}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Order(u8);

impl Order {
    pub const Z2: Order = Order(2);
    pub const Z3: Order = Order(3);
    pub const Z4: Order = Order(4);

    pub fn new(k: u8) -> Result<Self> {
        match k {
            2..=4 => Ok(Order(k)),
            _ => Err(Error::config("order", format!("expected 2, 3 or 4, got {k}"))),
        }
    }

    #[inline]
    pub fn get(self) -> u8 {
        self.0
    }

    /// Whether a chain of `n_atoms` has both ends excited in the Z_k pattern.
    #[inline]
    pub fn fits(self, n_atoms: usize) -> bool {
        n_atoms >= 1 && (n_atoms - 1) % self.0 as usize == 0
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Z{}", self.0)
    }
}

/// One physical chain: N atoms at uniform spacing `a`, driven by a global
/// laser with Rabi frequency Ω.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig<T> {
    n_atoms: usize,
    spacing: T,
    c6: T,
    order: Order,
    omega: T,
}

impl<T: Real> ChainConfig<T> {
    pub fn new(n_atoms: usize, spacing: T, c6: T, order: Order, omega: T) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::config("n_atoms", "must be at least 1"));
        }
        if !(spacing > T::zero()) || !spacing.is_finite() {
            return Err(Error::config("spacing_um", format!("must be positive, got {spacing}")));
        }
        if !(c6 > T::zero()) || !c6.is_finite() {
            return Err(Error::config("c6_mhz_um6", format!("must be positive, got {c6}")));
        }
        if !(omega > T::zero()) || !omega.is_finite() {
            return Err(Error::config("omega_mhz", format!("must be positive, got {omega}")));
        }
        if !order.fits(n_atoms) {
            return Err(Error::Congruence { n_atoms, order: order.get() });
        }
        Ok(Self { n_atoms, spacing, c6, order, omega })
    }

    /// Chain whose spacing is given as a fraction of the blockade radius.
    pub fn with_spacing_ratio(
        n_atoms: usize,
        spacing_over_rb: T,
        c6: T,
        order: Order,
        omega: T,
    ) -> Result<Self> {
        if !(spacing_over_rb > T::zero()) {
            return Err(Error::config("spacing_um", "spacing ratio must be positive"));
        }
        let rb = (c6 / omega).powf(T::lit(1.0 / 6.0));
        Self::new(n_atoms, spacing_over_rb * rb, c6, order, omega)
    }

    /// Rb-70S chain at Ω = 1 (2π)·MHz with the default spacing for `order`.
    pub fn standard(n_atoms: usize, order: Order) -> Result<Self> {
        Self::with_spacing_ratio(
            n_atoms,
            T::lit(default_spacing_over_rb(order)),
            T::lit(C6_RB70S),
            order,
            T::one(),
        )
    }

    #[inline]
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }
    #[inline]
    pub fn spacing(&self) -> T {
        self.spacing
    }
    #[inline]
    pub fn c6(&self) -> T {
        self.c6
    }
    #[inline]
    pub fn order(&self) -> Order {
        self.order
    }
    #[inline]
    pub fn omega(&self) -> T {
        self.omega
    }

    #[inline]
    pub fn dim(&self) -> usize {
        1usize << self.n_atoms
    }

    /// R_b = (C₆/Ω)^{1/6}.
    pub fn blockade_radius(&self) -> T {
        (self.c6 / self.omega).powf(T::lit(1.0 / 6.0))
    }

    /// Nearest-neighbour interaction C₆/a⁶ in (2π)·MHz.
    pub fn nn_interaction(&self) -> T {
        self.c6 / self.spacing.powi(6)
    }

    pub fn with_omega(&self, omega: T) -> Result<Self> {
        Self::new(self.n_atoms, self.spacing, self.c6, self.order, omega)
    }

    pub fn with_spacing(&self, spacing: T) -> Result<Self> {
        Self::new(self.n_atoms, spacing, self.c6, self.order, self.omega)
    }

    pub fn with_order(&self, order: Order) -> Result<Self> {
        Self::new(self.n_atoms, self.spacing, self.c6, order, self.omega)
    }

    pub fn target(&self) -> BareState {
        // congruence already checked in the constructor
        target_state(self.n_atoms, self.order).expect("validated chain")
    }

    pub fn disordered(&self) -> BareState {
        BareState::vacuum(self.n_atoms)
    }
}

/// A product state of ground (0) and Rydberg (1) atoms.
///
/// Atom 1 is the most significant bit, so `|101⟩` has index 5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BareState {
    index: usize,
    n_atoms: usize,
}

impl BareState {
    pub fn new(index: usize, n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 || n_atoms >= usize::BITS as usize || index >> n_atoms != 0 {
            return Err(Error::config(
                "index",
                format!("bare index {index} invalid for {n_atoms} atoms"),
            ));
        }
        Ok(Self { index, n_atoms })
    }

    pub fn vacuum(n_atoms: usize) -> Self {
        Self { index: 0, n_atoms }
    }

    /// Parses an occupation string such as `"10101"`.
    pub fn from_bits(bits: &str) -> Result<Self> {
        let n_atoms = bits.len();
        let mut index = 0usize;
        for c in bits.chars() {
            index <<= 1;
            match c {
                '0' => {}
                '1' => index |= 1,
                _ => {
                    return Err(Error::config("state", format!("bad occupation string `{bits}`")))
                }
            }
        }
        Self::new(index, n_atoms)
    }

    pub fn from_occupations(occ: &[bool]) -> Result<Self> {
        let index = occ.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        Self::new(index, occ.len())
    }

    #[inline]
    pub fn index(self) -> usize {
        self.index
    }
    #[inline]
    pub fn n_atoms(self) -> usize {
        self.n_atoms
    }

    /// Occupation of zero-based `site` (site 0 is atom 1).
    #[inline]
    pub fn is_excited(self, site: usize) -> bool {
        site_bit(self.index, site, self.n_atoms)
    }

    #[inline]
    pub fn excitations(self) -> u32 {
        self.index.count_ones()
    }

    pub fn occupations(self) -> Vec<bool> {
        (0..self.n_atoms).map(|s| self.is_excited(s)).collect()
    }
}

impl fmt::Display for BareState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in 0..self.n_atoms {
            f.write_str(if self.is_excited(s) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Bit of zero-based `site` in a bare index.
#[inline]
pub(crate) fn site_bit(index: usize, site: usize, n_atoms: usize) -> bool {
    (index >> (n_atoms - 1 - site)) & 1 == 1
}

/// The Z_k ordered product state: atoms 1, 1+k, 1+2k, … excited.
pub fn target_state(n_atoms: usize, order: Order) -> Result<BareState> {
    if !order.fits(n_atoms) {
        return Err(Error::Congruence { n_atoms, order: order.get() });
    }
    let k = order.get() as usize;
    let index = (0..n_atoms)
        .step_by(k)
        .fold(0usize, |acc, site| acc | 1 << (n_atoms - 1 - site));
    BareState::new(index, n_atoms)
}

/// The lowest-lying bare states that drive the ramp dynamics, labelled by
/// Roman numerals: |I⟩ = |D⟩, then every single excitation in site order,
/// then the ordered target. For N = 3 this is |000⟩, |100⟩, |010⟩, |001⟩,
/// |101⟩.
pub fn non_adiabatic_basis(n_atoms: usize, order: Order) -> Result<Vec<(String, BareState)>> {
    let target = target_state(n_atoms, order)?;
    let mut states = vec![BareState::vacuum(n_atoms)];
    states.extend((0..n_atoms).map(|s| BareState { index: 1 << (n_atoms - 1 - s), n_atoms }));
    if !states.contains(&target) {
        states.push(target);
    }
    Ok(states.into_iter().enumerate().map(|(i, b)| (roman(i + 1), b)).collect())
}

/// Upper-case Roman numeral for `n ≥ 1`.
pub fn roman(mut n: usize) -> String {
    const TABLE: [(usize, &str); 13] = [
        (1000, "M"), (900, "CM"), (500, "D"), (400, "CD"), (100, "C"), (90, "XC"),
        (50, "L"), (40, "XL"), (10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I"),
    ];
    let mut out = String::new();
    for &(v, s) in &TABLE {
        while n >= v {
            out.push_str(s);
            n -= v;
        }
    }
    out
}

/// Inverse of [`roman`]; `None` for malformed numerals.
pub fn parse_roman(s: &str) -> Option<usize> {
    if s.is_empty() {
        return None;
    }
    let value = |c| match c {
        'I' => Some(1),
        'V' => Some(5),
        'X' => Some(10),
        'L' => Some(50),
        'C' => Some(100),
        'D' => Some(500),
        'M' => Some(1000),
        _ => None,
    };
    let digits: Option<Vec<usize>> = s.chars().map(value).collect();
    let digits = digits?;
    let mut total = 0;
    for (i, &d) in digits.iter().enumerate() {
        if digits.get(i + 1).is_some_and(|&next| next > d) {
            total -= d as isize;
        } else {
            total += d as isize;
        }
    }
    let n = usize::try_from(total).ok().filter(|&n| n > 0)?;
    (roman(n) == s).then_some(n)
}

/// Trapezoidal Rabi envelope inside the detuning program, plus idle windows
/// (Ω = 0) before and after it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OmegaEnvelope<T> {
    pub rise: T,
    pub hold: T,
    pub fall: T,
    pub idle_lead: T,
    pub idle_tail: T,
}

impl<T: Real> OmegaEnvelope<T> {
    /// Ω switched on for the whole program, no idles.
    pub fn constant(hold: T) -> Self {
        Self { rise: T::zero(), hold, fall: T::zero(), idle_lead: T::zero(), idle_tail: T::zero() }
    }

    /// Ω off for `idle` before and after the program, instantaneous switching.
    pub fn with_idles(hold: T, idle: T) -> Self {
        Self { rise: T::zero(), hold, fall: T::zero(), idle_lead: idle, idle_tail: idle }
    }
}

/// Piecewise-linear detuning program Δ(t) with a Rabi envelope.
///
/// Knot times are relative to the start of the program; the absolute clock
/// starts at the beginning of the leading idle window, so the program
/// occupies `[idle_lead, idle_lead + tau]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSchedule<T> {
    knot_times: Vec<T>,
    knot_deltas: Vec<T>,
    envelope: OmegaEnvelope<T>,
}

impl<T: Real> PulseSchedule<T> {
    pub fn new(knot_times: Vec<T>, knot_deltas: Vec<T>, envelope: OmegaEnvelope<T>) -> Result<Self> {
        Self::with_floor(knot_times, knot_deltas, envelope, T::lit(RESOLUTION_FLOOR_US))
    }

    /// Like [`PulseSchedule::new`] with a custom segment-duration floor.
    pub fn with_floor(
        knot_times: Vec<T>,
        knot_deltas: Vec<T>,
        envelope: OmegaEnvelope<T>,
        floor: T,
    ) -> Result<Self> {
        if knot_times.len() < 2 {
            return Err(Error::InvalidSchedule("need at least two knots".into()));
        }
        if knot_times.len() != knot_deltas.len() {
            return Err(Error::InvalidSchedule(format!(
                "{} knot times but {} knot deltas",
                knot_times.len(),
                knot_deltas.len()
            )));
        }
        if knot_times[0] != T::zero() {
            return Err(Error::InvalidSchedule("first knot must sit at t = 0".into()));
        }
        if knot_times.iter().chain(&knot_deltas).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSchedule("non-finite knot".into()));
        }
        let slack = T::one() - T::lit(1e-9);
        for w in knot_times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidSchedule("knot times must increase strictly".into()));
            }
            if w[1] - w[0] < floor * slack {
                return Err(Error::InvalidSchedule(format!(
                    "segment [{}, {}] shorter than the {} us resolution floor",
                    w[0], w[1], floor
                )));
            }
        }
        let tau = *knot_times.last().unwrap();
        let e = &envelope;
        let bad = |x: T| x < T::zero() || !x.is_finite();
        if bad(e.rise) || bad(e.fall) || bad(e.idle_lead) || bad(e.idle_tail) || bad(e.hold) {
            return Err(Error::InvalidSchedule("envelope durations and Ω must be >= 0".into()));
        }
        if e.rise + e.fall > tau {
            return Err(Error::InvalidSchedule("Ω rise + fall longer than the program".into()));
        }
        Ok(Self { knot_times, knot_deltas, envelope })
    }

    /// Uniformly spaced knots from `start` to `end` with the given interior
    /// values.
    pub fn uniform(
        tau: T,
        start: T,
        interior: &[T],
        end: T,
        envelope: OmegaEnvelope<T>,
    ) -> Result<Self> {
        let n_segments = interior.len() + 1;
        check_resolution(tau, n_segments)?;
        let times = uniform_times(tau, n_segments);
        let mut deltas = Vec::with_capacity(n_segments + 1);
        deltas.push(start);
        deltas.extend_from_slice(interior);
        deltas.push(end);
        Self::new(times, deltas, envelope)
    }

    /// Linear ramp from `start` to `end` over `tau`.
    pub fn linear_ramp(tau: T, start: T, end: T, envelope: OmegaEnvelope<T>) -> Result<Self> {
        Self::new(vec![T::zero(), tau], vec![start, end], envelope)
    }

    #[inline]
    pub fn tau(&self) -> T {
        *self.knot_times.last().unwrap()
    }
    #[inline]
    pub fn knot_times(&self) -> &[T] {
        &self.knot_times
    }
    #[inline]
    pub fn knot_deltas(&self) -> &[T] {
        &self.knot_deltas
    }
    #[inline]
    pub fn envelope(&self) -> &OmegaEnvelope<T> {
        &self.envelope
    }
    #[inline]
    pub fn n_segments(&self) -> usize {
        self.knot_times.len() - 1
    }

    /// Absolute end time including both idle windows.
    pub fn total_duration(&self) -> T {
        self.envelope.idle_lead + self.tau() + self.envelope.idle_tail
    }

    /// Absolute start of the detuning program.
    #[inline]
    pub fn program_start(&self) -> T {
        self.envelope.idle_lead
    }

    pub fn with_envelope(&self, envelope: OmegaEnvelope<T>) -> Result<Self> {
        Self::new(self.knot_times.clone(), self.knot_deltas.clone(), envelope)
    }

    /// Control values `(Ω, Δ)` in (2π)·MHz at absolute time `t`.
    pub fn evaluate(&self, t: T) -> Result<(T, T)> {
        let end = self.total_duration();
        if !(t >= T::zero() && t <= end) {
            return Err(Error::OutOfRange { t: t.as_f64(), start: 0.0, end: end.as_f64() });
        }
        Ok((self.omega_at(t), self.delta_at(t)))
    }

    /// Δ at absolute time `t`, clamped to the boundary knots outside the
    /// program window.
    pub fn delta_at(&self, t: T) -> T {
        let local = t - self.envelope.idle_lead;
        let times = &self.knot_times;
        let deltas = &self.knot_deltas;
        if local <= T::zero() {
            return deltas[0];
        }
        if local >= self.tau() {
            return *deltas.last().unwrap();
        }
        // first knot strictly after `local`
        let hi = times.partition_point(|&x| x <= local);
        let lo = hi - 1;
        if times[lo] == local {
            return deltas[lo];
        }
        let w = (local - times[lo]) / (times[hi] - times[lo]);
        deltas[lo] * (T::one() - w) + deltas[hi] * w
    }

    /// Ω at absolute time `t`; zero in the idle windows.
    pub fn omega_at(&self, t: T) -> T {
        let e = &self.envelope;
        let local = t - e.idle_lead;
        let tau = self.tau();
        if local < T::zero() || local > tau {
            return T::zero();
        }
        if e.rise > T::zero() && local < e.rise {
            return e.hold * local / e.rise;
        }
        if e.fall > T::zero() && local > tau - e.fall {
            return e.hold * (tau - local) / e.fall;
        }
        e.hold
    }

    /// Times (absolute) where the controls have kinks. Both controls are
    /// linear between consecutive breakpoints.
    pub fn breakpoints(&self) -> Vec<T> {
        let e = &self.envelope;
        let lead = e.idle_lead;
        let mut pts: Vec<T> = vec![T::zero()];
        pts.extend(self.knot_times.iter().map(|&t| t + lead));
        if e.rise > T::zero() {
            pts.push(lead + e.rise);
        }
        if e.fall > T::zero() {
            pts.push(lead + self.tau() - e.fall);
        }
        pts.push(self.total_duration());
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }

    /// Δ(t) reversed in time, for backward propagation checks. The envelope
    /// mirrors as well.
    pub fn time_reversed(&self) -> Self {
        let tau = self.tau();
        let times = self.knot_times.iter().rev().map(|&t| tau - t).collect::<Vec<_>>();
        let deltas = self.knot_deltas.iter().rev().copied().collect();
        let e = self.envelope;
        let envelope = OmegaEnvelope {
            rise: e.fall,
            hold: e.hold,
            fall: e.rise,
            idle_lead: e.idle_tail,
            idle_tail: e.idle_lead,
        };
        // same segment durations, so the floor check cannot fail
        Self { knot_times: fix_origin(times), knot_deltas: deltas, envelope }
    }
}

fn fix_origin<T: Real>(mut times: Vec<T>) -> Vec<T> {
    times[0] = T::zero();
    times
}

/// `n_segments + 1` uniform knot times on `[0, tau]`.
pub fn uniform_times<T: Real>(tau: T, n_segments: usize) -> Vec<T> {
    let n = T::from_usize_lossy(n_segments);
    let mut times: Vec<T> = (0..=n_segments).map(|i| tau * T::from_usize_lossy(i) / n).collect();
    times[n_segments] = tau;
    times
}

fn check_resolution<T: Real>(tau: T, n_segments: usize) -> Result<()> {
    let floor = T::lit(RESOLUTION_FLOOR_US);
    let need = floor * T::from_usize_lossy(n_segments);
    if n_segments == 0 || !(tau >= need * (T::one() - T::lit(1e-12))) {
        return Err(Error::ScheduleTooShort {
            tau: tau.as_f64(),
            n_segments,
            floor: RESOLUTION_FLOOR_US,
        });
    }
    Ok(())
}

/// Seed schedule for the NQN search: uniform knots, Δ(0) = −12Ω and
/// Δ(τ) = +12Ω, interior knots drawn uniformly from [−12Ω, 12Ω].
pub fn default_nqn_seed<T: Real, R: Rng + ?Sized>(
    config: &ChainConfig<T>,
    tau: T,
    n_segments: usize,
    rng: &mut R,
) -> Result<PulseSchedule<T>> {
    check_resolution(tau, n_segments)?;
    let omega = config.omega();
    let span = T::lit(12.0) * omega;
    let interior: Vec<T> = (1..n_segments)
        .map(|_| T::lit(rng.gen_range(-1.0..=1.0)) * span)
        .collect();
    PulseSchedule::uniform(tau, -span, &interior, span, OmegaEnvelope::constant(omega))
}
