//! Multi-start BFGS search over the interior knot detunings of a
//! piecewise-linear ramp, maximising the fidelity to the ordered target,
//! and classification of the resulting fast/slow/fast ramp structure.
//!
//! Each restart runs in two stages. The search stage evaluates the loss in
//! an energy-truncated subspace with a fixed, calibrated step; the best
//! candidates are then polished in the full Hilbert space and the winner is
//! re-evaluated with the adaptive propagator at a tight tolerance.
//!
//! Restarts draw their interior knots uniformly from [−12Ω, 12Ω], except
//! that the first one starts from the three-stage [`nqn_template`].

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{uniform_times, ChainConfig, OmegaEnvelope, PulseSchedule};
use crate::propagator::{Integrator, PropagationOptions, Propagator, StateVector};

pub const DEFAULT_SEGMENTS: usize = 8;
pub const DEFAULT_RESTARTS: usize = 50;
/// Knot bound, in units of Ω.
pub const DEFAULT_BOUND: f64 = 20.0;
/// Finite-difference step, in units of Ω.
pub const DEFAULT_FD_STEP: f64 = 1e-3;
/// Boundary detunings, in units of Ω.
pub const DEFAULT_DELTA_START: f64 = -12.0;
pub const DEFAULT_DELTA_END: f64 = 12.0;
/// Sweep-rate thresholds for [`classify_nqn`], Ω/μs.
pub const THETA_FAST: f64 = 20.0;
pub const THETA_SLOW: f64 = 0.0;

/// Numerical settings of the search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Loss accuracy the search-stage step is calibrated to.
    pub search_tol: f64,
    /// Loss accuracy the polish-stage step is calibrated to.
    pub polish_tol: f64,
    /// Propagation tolerance of the final re-evaluation.
    pub final_tol: f64,
    pub max_iterations: usize,
    pub polish_iterations: usize,
    /// Number of best search results that are polished.
    pub polish_candidates: usize,
    /// Stop when the projected gradient falls below this (per Ω).
    pub gtol: f64,
    /// Stop when a step improves the loss by less than this.
    pub ftol: f64,
    /// Truncate the search space to low interaction energies.
    pub truncate: bool,
    /// Largest knot move per BFGS iteration, in units of Ω.
    pub max_move: f64,
    /// Start the first restart from [`nqn_template`] instead of a random draw.
    pub template_start: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            search_tol: 1e-6,
            polish_tol: 1e-8,
            final_tol: 1e-8,
            max_iterations: 100,
            polish_iterations: 40,
            polish_candidates: 3,
            gtol: 1e-6,
            ftol: 1e-10,
            truncate: true,
            max_move: 4.0,
            template_start: true,
        }
    }
}

/// Ramp optimisation for one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationProblem {
    pub config: ChainConfig<f64>,
    pub tau: f64,
    pub n_segments: usize,
    /// Fixed first and last knot, in units of Ω.
    pub delta_start: f64,
    pub delta_end: f64,
    pub restarts: usize,
    pub seed: u64,
    /// |knot| ≤ bound·Ω.
    pub bound: f64,
    /// Finite-difference step in units of Ω.
    pub fd_step: f64,
    pub settings: SolverSettings,
}

impl OptimizationProblem {
    pub fn new(config: ChainConfig<f64>, tau: f64) -> Self {
        Self {
            config,
            tau,
            n_segments: DEFAULT_SEGMENTS,
            delta_start: DEFAULT_DELTA_START,
            delta_end: DEFAULT_DELTA_END,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            bound: DEFAULT_BOUND,
            fd_step: DEFAULT_FD_STEP,
            settings: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_segments < 2 {
            return Err(Error::config("n_segments", "need at least two segments"));
        }
        if self.restarts == 0 {
            return Err(Error::config("restarts", "need at least one restart"));
        }
        if !(self.bound > 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::config("bound", "bound and finite-difference step must be positive"));
        }
        // resolution floor and τ > 0
        self.schedule(&vec![0.0; self.n_free()])?;
        Ok(())
    }

    /// Number of free interior knots.
    #[inline]
    pub fn n_free(&self) -> usize {
        self.n_segments - 1
    }

    fn omega(&self) -> f64 {
        self.config.omega()
    }

    /// Schedule with the given interior knots ((2π)·MHz) and Ω held on.
    pub fn schedule(&self, knots: &[f64]) -> Result<PulseSchedule<f64>> {
        if knots.len() != self.n_free() {
            return Err(Error::DimensionMismatch { expected: self.n_free(), found: knots.len() });
        }
        let om = self.omega();
        PulseSchedule::uniform(
            self.tau,
            self.delta_start * om,
            knots,
            self.delta_end * om,
            OmegaEnvelope::constant(om),
        )
    }

    /// 1 − F at the propagation tolerance `tol` in the full space.
    pub fn loss(&self, knots: &[f64], tol: f64) -> Result<f64> {
        Objective::adaptive(self, tol)?.loss(knots)
    }

    /// Central-difference gradient of [`OptimizationProblem::loss`].
    pub fn gradient(&self, knots: &[f64], tol: f64) -> Result<Vec<f64>> {
        Ok(Objective::adaptive(self, tol)?.gradient(knots)?.1)
    }

    /// Runs every restart and returns the best schedule.
    pub fn optimize(&self) -> Result<OptimizationReport> {
        optimize(self)
    }
}

#[derive(Clone, Copy, Debug)]
enum Mode {
    Adaptive(PropagationOptions<f64>),
    Fixed(f64),
}

/// Loss evaluator with a fixed propagator and accuracy.
#[derive(Clone, Debug)]
pub struct Objective<'a> {
    problem: &'a OptimizationProblem,
    propagator: Propagator<f64>,
    mode: Mode,
    start: StateVector<f64>,
}

impl<'a> Objective<'a> {
    /// Full space, adaptive steps at `tol`.
    pub fn adaptive(problem: &'a OptimizationProblem, tol: f64) -> Result<Self> {
        let propagator = Propagator::new(&problem.config)?;
        Ok(Self::with(problem, propagator, Mode::Adaptive(PropagationOptions::with_tol(tol))))
    }

    /// Given propagator with a fixed step `h` (μs).
    pub fn fixed(problem: &'a OptimizationProblem, propagator: Propagator<f64>, h: f64) -> Self {
        Self::with(problem, propagator, Mode::Fixed(h))
    }

    fn with(problem: &'a OptimizationProblem, propagator: Propagator<f64>, mode: Mode) -> Self {
        let start = StateVector::basis(problem.config.disordered());
        Self { problem, propagator, mode, start }
    }

    /// Fixed-step objective whose loss is converged to `loss_tol` on a
    /// stress ramp alternating between the knot bounds.
    pub fn calibrated(problem: &'a OptimizationProblem, propagator: Propagator<f64>, loss_tol: f64) -> Result<Self> {
        let b = problem.bound * problem.omega();
        let stress: Vec<f64> = (0..problem.n_free()).map(|i| if i % 2 == 0 { b } else { -b }).collect();
        let mut h = problem.tau / problem.n_segments as f64 / 4.0;
        let mut obj = Self::fixed(problem, propagator, h);
        let mut prev = obj.loss(&stress)?;
        for _ in 0..16 {
            h /= 2.0;
            obj.mode = Mode::Fixed(h);
            let next = obj.loss(&stress)?;
            if (next - prev).abs() < loss_tol {
                // the coarser of the two already meets the tolerance
                obj.mode = Mode::Fixed(2.0 * h);
                return Ok(obj);
            }
            prev = next;
        }
        Err(Error::Convergence(format!("step calibration stalled at h = {h} us")))
    }

    pub fn step(&self) -> Option<f64> {
        match self.mode {
            Mode::Fixed(h) => Some(h),
            Mode::Adaptive(_) => None,
        }
    }

    pub fn subspace_dim(&self) -> usize {
        self.propagator.operator().dim()
    }

    pub fn loss(&self, knots: &[f64]) -> Result<f64> {
        let s = self.problem.schedule(knots)?;
        let tau = s.total_duration();
        let out = match self.mode {
            Mode::Adaptive(opts) => self.propagator.propagate(&self.start, &s, 0.0, tau, &opts)?.final_state,
            Mode::Fixed(h) => self.propagator.propagate_fixed(&self.start, &s, 0.0, tau, h, Integrator::Magnus4)?,
        };
        let f = out.amplitude(self.problem.config.target()).norm_sqr();
        Ok((1.0 - f).clamp(0.0, 1.0))
    }

    /// (loss, ∇loss) with central differences of step `fd_step·Ω`. Knots
    /// at a bound are differenced one-sidedly into the box.
    pub fn gradient(&self, knots: &[f64]) -> Result<(f64, Vec<f64>)> {
        if let Mode::Fixed(h) = self.mode {
            return self.gradient_fixed(knots, h);
        }
        let f0 = self.loss(knots)?;
        let h = self.problem.fd_step * self.problem.omega();
        let b = self.problem.bound * self.problem.omega();
        let mut g = Vec::with_capacity(knots.len());
        let mut x = knots.to_vec();
        for i in 0..knots.len() {
            let xi = knots[i];
            let (lo, hi) = ((xi - h).max(-b), (xi + h).min(b));
            x[i] = hi;
            let fp = self.loss(&x)?;
            x[i] = lo;
            let fm = self.loss(&x)?;
            x[i] = xi;
            g.push((fp - fm) / (hi - lo));
        }
        Ok((f0, g))
    }
}

impl Objective<'_> {
    /// Fixed-step central differences. A knot only moves the two segments
    /// around it, so each shifted loss is the overlap of the stored forward
    /// state before them, carried across them, with the adjoint-propagated
    /// target after them. This equals a full propagation to rounding.
    fn gradient_fixed(&self, knots: &[f64], step: f64) -> Result<(f64, Vec<f64>)> {
        let p = self.problem;
        let base = p.schedule(knots)?;
        let target = StateVector::basis(p.config.target());
        let fwd = self.propagator.kink_states(&self.start, &base, step, Integrator::Magnus4)?;
        let adj = self.propagator.adjoint_kink_states(&target, &base, step, Integrator::Magnus4)?;
        debug_assert_eq!(fwd.len(), knots.len() + 2);
        let overlap = |chi: &[Complex64], phi: &[Complex64]| -> f64 {
            chi.iter().zip(phi).map(|(c, f)| c.conj() * f).sum::<Complex64>().norm_sqr()
        };
        let loss_of = |f: f64| (1.0 - f).clamp(0.0, 1.0);
        let f0 = loss_of(overlap(&adj[fwd.len() - 1].1, &fwd[fwd.len() - 1].1));

        let h = p.fd_step * p.omega();
        let b = p.bound * p.omega();
        let mut g = Vec::with_capacity(knots.len());
        let mut x = knots.to_vec();
        let shifted = |x: &[f64], i: usize| -> Result<f64> {
            let s = p.schedule(x)?;
            let (t0, t1) = (fwd[i].0, fwd[i + 2].0);
            let mut phi = fwd[i].1.clone();
            self.propagator.evolve_between(&mut phi, &s, t0, t1, step, Integrator::Magnus4)?;
            Ok(loss_of(overlap(&adj[i + 2].1, &phi)))
        };
        for i in 0..knots.len() {
            let xi = knots[i];
            let (lo, hi) = ((xi - h).max(-b), (xi + h).min(b));
            x[i] = hi;
            let fp = shifted(&x, i)?;
            x[i] = lo;
            let fm = shifted(&x, i)?;
            x[i] = xi;
            g.push((fp - fm) / (hi - lo));
        }
        Ok((f0, g))
    }
}

/// Outcome of one BFGS run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub seed: u64,
    pub initial_knots: Vec<f64>,
    pub knots: Vec<f64>,
    pub loss: f64,
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub gradient_evaluations: usize,
    pub line_search_failed: bool,
}

/// Fast-forward / slow-backward / fast-forward windows of a ramp, μs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NqnWindows {
    pub n1: (f64, f64),
    pub q: (f64, f64),
    pub n2: (f64, f64),
    /// Detuning at the end of N₁ and at the end of Q, (2π)·MHz.
    pub n1_end_delta: f64,
    pub q_end_delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NqnClass {
    Nqn(NqnWindows),
    Unclassified,
}

impl NqnClass {
    pub fn windows(&self) -> Option<&NqnWindows> {
        match self {
            NqnClass::Nqn(w) => Some(w),
            NqnClass::Unclassified => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    /// Interior knots of the winner, (2π)·MHz.
    pub best_knots: Vec<f64>,
    /// All knot times and values of the winner.
    pub knot_times_us: Vec<f64>,
    pub knot_deltas_mhz: Vec<f64>,
    /// Fidelity of the winner at the final tolerance.
    pub best_fidelity: f64,
    /// Seed of the restart the winner descends from.
    pub best_seed: u64,
    pub restart_seeds: Vec<u64>,
    /// Search-stage results, in restart order.
    pub restarts: Vec<RestartResult>,
    /// Polish-stage results, best first.
    pub polished: Vec<RestartResult>,
    pub gradient_evaluations: usize,
    pub search_step_us: f64,
    pub search_dim: usize,
    pub polish_step_us: f64,
    /// Every restart ended on a failed line search.
    pub all_line_searches_failed: bool,
    pub nqn: NqnClass,
}

/// BFGS with box projection and an Armijo backtracking line search.
pub fn bfgs(objective: &Objective<'_>, x0: &[f64], max_iterations: usize, seed: u64) -> Result<RestartResult> {
    let p = objective.problem;
    let b = p.bound * p.omega();
    let gtol = p.settings.gtol * p.omega();
    let ftol = p.settings.ftol;
    let n = x0.len();
    let clamp = |v: f64| v.clamp(-b, b);
    let mut x: Vec<f64> = x0.iter().map(|&v| clamp(v)).collect();
    let (mut f, mut g) = objective.gradient(&x)?;
    let mut grads = 1;
    let mut history = vec![f];
    let mut hinv = identity(n);
    let mut fresh = true;
    let mut failed = false;
    let mut iterations = 0;
    let max_move = p.settings.max_move * p.omega();

    while iterations < max_iterations {
        if projected_norm(&x, &g, b) < gtol || f <= 1e-14 {
            break;
        }
        let mut d = mat_vec(&hinv, &g).into_iter().map(|v| -v).collect::<Vec<_>>();
        if dot(&d, &g) >= 0.0 {
            hinv = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
        }
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dmax > max_move {
            d.iter_mut().for_each(|v| *v *= max_move / dmax);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| clamp(xi + alpha * di)).collect();
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if step.iter().all(|s| s.abs() < 1e-14) {
                break;
            }
            let fx = objective.loss(&xn)?;
            if fx <= f + 1e-4 * decrease && decrease < 0.0 {
                accepted = Some((xn, fx));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fx)) = accepted else {
            if fresh {
                failed = true;
                break;
            }
            hinv = identity(n);
            fresh = true;
            continue;
        };
        iterations += 1;
        let (fx2, gn) = objective.gradient(&xn)?;
        debug_assert!((fx2 - fx).abs() < 1e-12);
        grads += 1;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt().max(1e-300) && sy > 0.0 {
            if fresh {
                let scale = sy / dot(&y, &y);
                hinv = identity(n).into_iter().map(|v| v * scale).collect();
            }
            bfgs_update(&mut hinv, &s, &y, sy);
            fresh = false;
        }
        let improvement = f - fx;
        x = xn;
        f = fx;
        g = gn;
        history.push(f);
        if improvement < ftol {
            break;
        }
    }
    Ok(RestartResult {
        seed,
        initial_knots: x0.to_vec(),
        knots: x,
        loss: f,
        loss_history: history,
        iterations,
        gradient_evaluations: grads,
        line_search_failed: failed,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|r| dot(&m[r * n..(r + 1) * n], v)).collect()
}

/// H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for r in 0..n {
        for c in 0..n {
            h[r * n + c] += -rho * (s[r] * hy[c] + hy[r] * s[c]) + (rho * rho * yhy + rho) * s[r] * s[c];
        }
    }
}

/// ‖g‖∞ ignoring components that push against an active bound.
fn projected_norm(x: &[f64], g: &[f64], b: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let blocked = (xi >= b && gi < 0.0) || (xi <= -b && gi > 0.0);
            if blocked { 0.0 } else { gi.abs() }
        })
        .fold(0.0, f64::max)
}

/// Interaction cutoff ((2π)·MHz) of the search subspace. Strong blockade
/// (V_nn ≥ 100Ω) drops every nearest-neighbour pair; weaker blockade keeps
/// states with a single pair.
pub fn search_cutoff(config: &ChainConfig<f64>) -> f64 {
    let om = config.omega();
    let v = config.nn_interaction();
    if v >= 100.0 * om {
        (0.5 * v).min(200.0 * om)
    } else {
        (1.7 * v).max(60.0 * om)
    }
}

pub fn search_propagator_for(problem: &OptimizationProblem) -> Result<Propagator<f64>> {
    if problem.settings.truncate {
        let cut = Propagator::truncated(&problem.config, search_cutoff(&problem.config))?;
        // only worth it when the subspace is markedly smaller
        if (cut.operator().dim() as f64) < 0.6 * problem.config.dim() as f64 {
            return Ok(cut);
        }
    }
    Propagator::new(&problem.config)
}

/// Deterministic seeds of the individual restarts.
pub fn restart_seeds(seed: u64, restarts: usize) -> Vec<u64> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..restarts).map(|_| master.gen()).collect()
}

/// Interior knots drawn uniformly from [−12Ω, 12Ω].
pub fn initial_knots(problem: &OptimizationProblem, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 12.0 * problem.omega();
    (0..problem.n_free()).map(|_| rng.gen_range(-span..=span)).collect()
}

/// Three-stage starting ramp: a jump to +3Ω after the first segment, a
/// linear backward sweep to −3Ω at the last interior knot, then the final
/// jump to the end detuning.
pub fn nqn_template(problem: &OptimizationProblem) -> Vec<f64> {
    let om = problem.omega();
    let n = problem.n_free();
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|k| (3.0 - 6.0 * k as f64 / (n - 1) as f64) * om).collect()
}

fn by_loss_then_seed(a: &RestartResult, b: &RestartResult) -> std::cmp::Ordering {
    a.loss.total_cmp(&b.loss).then(a.seed.cmp(&b.seed))
}

pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationReport> {
    problem.validate()?;
    let settings = &problem.settings;
    let search = Objective::calibrated(problem, search_propagator_for(problem)?, settings.search_tol)?;
    let seeds = restart_seeds(problem.seed, problem.restarts);

    let restarts: Vec<RestartResult> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let x0 = if i == 0 && settings.template_start {
                nqn_template(problem)
            } else {
                initial_knots(problem, seed)
            };
            bfgs(&search, &x0, settings.max_iterations, seed)
        })
        .collect::<Result<_>>()?;

    let mut ranked: Vec<&RestartResult> = restarts.iter().collect();
    ranked.sort_by(|a, b| by_loss_then_seed(a, b));
    let polish = Objective::calibrated(problem, Propagator::new(&problem.config)?, settings.polish_tol)?;
    let mut polished: Vec<RestartResult> = ranked
        .iter()
        .take(settings.polish_candidates.max(1))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|r| bfgs(&polish, &r.knots, settings.polish_iterations, r.seed))
        .collect::<Result<_>>()?;
    polished.sort_by(by_loss_then_seed);
    let best = &polished[0];

    let schedule = problem.schedule(&best.knots)?;
    let final_obj = Objective::adaptive(problem, settings.final_tol)?;
    let best_fidelity = 1.0 - final_obj.loss(&best.knots)?;
    let gradient_evaluations =
        restarts.iter().chain(&polished).map(|r| r.gradient_evaluations).sum();

    Ok(OptimizationReport {
        best_knots: best.knots.clone(),
        knot_times_us: schedule.knot_times().to_vec(),
        knot_deltas_mhz: schedule.knot_deltas().to_vec(),
        best_fidelity,
        best_seed: best.seed,
        restart_seeds: seeds,
        all_line_searches_failed: restarts.iter().all(|r| r.line_search_failed),
        gradient_evaluations,
        search_step_us: search.step().unwrap_or(0.0),
        search_dim: search.subspace_dim(),
        polish_step_us: polish.step().unwrap_or(0.0),
        nqn: classify_nqn(&schedule, problem.omega()),
        restarts,
        polished,
    })
}

/// Thresholds for [`classify_nqn_with`], in Ω/μs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NqnThresholds {
    pub fast: f64,
    pub slow: f64,
}

impl Default for NqnThresholds {
    fn default() -> Self {
        Self { fast: THETA_FAST, slow: THETA_SLOW }
    }
}

/// [`classify_nqn_with`] at the default thresholds.
pub fn classify_nqn(schedule: &PulseSchedule<f64>, omega: f64) -> NqnClass {
    classify_nqn_with(schedule, omega, NqnThresholds::default())
}

/// Splits a ramp into a leading run of fast forward segments (rate above
/// `fast`), a trailing run of the same kind, and the segments between.
/// The ramp is NQN when both runs and the middle are non-empty, no middle
/// segment is fast forward, and the middle's net rate is below `slow`.
pub fn classify_nqn_with(schedule: &PulseSchedule<f64>, omega: f64, th: NqnThresholds) -> NqnClass {
    let ts = schedule.knot_times();
    let ds = schedule.knot_deltas();
    let n = ts.len() - 1;
    if n < 3 {
        return NqnClass::Unclassified;
    }
    let fast = |k: usize| (ds[k + 1] - ds[k]) / (ts[k + 1] - ts[k]) > th.fast * omega;
    let lead = (0..n).take_while(|&k| fast(k)).count();
    let tail = (0..n).rev().take_while(|&k| fast(k)).count();
    if lead == 0 || tail == 0 || lead + tail >= n {
        return NqnClass::Unclassified;
    }
    let (q0, q1) = (lead, n - tail);
    if (q0..q1).any(fast) {
        return NqnClass::Unclassified;
    }
    let net = (ds[q1] - ds[q0]) / (ts[q1] - ts[q0]);
    if !(net < th.slow * omega) {
        return NqnClass::Unclassified;
    }
    let off = schedule.program_start();
    NqnClass::Nqn(NqnWindows {
        n1: (off + ts[0], off + ts[q0]),
        q: (off + ts[q0], off + ts[q1]),
        n2: (off + ts[q1], off + ts[n]),
        n1_end_delta: ds[q0],
        q_end_delta: ds[q1],
    })
}

/// Uniform knot times of a problem, μs.
pub fn knot_times(problem: &OptimizationProblem) -> Vec<f64> {
    uniform_times(problem.tau, problem.n_segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Order, C6_RB70S};

    fn problem(n: usize) -> OptimizationProblem {
        let c = ChainConfig::with_spacing_ratio(n, 0.55, C6_RB70S, Order::Z2, 1.0).unwrap();
        OptimizationProblem::new(c, 1.8)
    }

    fn ramp(knots: &[f64]) -> PulseSchedule<f64> {
        PulseSchedule::uniform(1.8, -12.0, knots, 12.0, OmegaEnvelope::constant(1.0)).unwrap()
    }

    #[test]
    fn classifies_three_stage_ramp() {
        let s = ramp(&[4.25, 0.83, 1.02, -0.17, -0.37, -1.66, -2.84]);
        let w = *classify_nqn(&s, 1.0).windows().unwrap();
        assert_eq!(w.n1, (0.0, 0.225));
        assert!((w.q.1 - 1.575).abs() < 1e-12);
        assert_eq!((w.n1_end_delta, w.q_end_delta), (4.25, -2.84));
    }

    #[test]
    fn monotone_ramp_is_unclassified() {
        let s = PulseSchedule::linear_ramp(1.8, -12.0, 12.0, OmegaEnvelope::constant(1.0)).unwrap();
        assert_eq!(classify_nqn(&s, 1.0), NqnClass::Unclassified);
        let s = ramp(&[-9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0]);
        assert_eq!(classify_nqn(&s, 1.0), NqnClass::Unclassified);
    }

    #[test]
    fn mirrored_ramp_has_mirrored_windows() {
        // Δ(τ − t) = −Δ(t)
        let s = ramp(&[5.0, 3.0, 1.0, 0.0, -1.0, -3.0, -5.0]);
        let w = *classify_nqn(&s, 1.0).windows().unwrap();
        assert!((w.n1.1 - w.n1.0 - (w.n2.1 - w.n2.0)).abs() < 1e-12);
        assert_eq!(w.n1_end_delta, -w.q_end_delta);
    }

    #[test]
    fn loss_is_a_probability() {
        let p = problem(3);
        for seed in 0..20 {
            let l = p.loss(&initial_knots(&p, seed), 1e-8).unwrap();
            assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn central_difference_matches_five_point_stencil() {
        let p = problem(3);
        let obj = Objective::adaptive(&p, 1e-11).unwrap();
        let x = initial_knots(&p, 11);
        let (_, g) = obj.gradient(&x).unwrap();
        let h = 1e-3;
        for i in [0, 3, 6] {
            let at = |d: f64| {
                let mut y = x.clone();
                y[i] += d;
                obj.loss(&y).unwrap()
            };
            let five = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            assert!((g[i] - five).abs() <= 1e-4 * five.abs().max(1e-3), "{i}: {} vs {five}", g[i]);
        }
    }

    #[test]
    fn segment_cached_gradient_equals_full_propagation() {
        for (n, truncate) in [(3, false), (5, false), (7, true)] {
            let p = problem(n);
            let prop = if truncate { search_propagator_for(&p).unwrap() } else { Propagator::new(&p.config).unwrap() };
            assert_eq!(prop.operator().is_truncated(), truncate);
            let obj = Objective::fixed(&p, prop, 0.01);
            let x = initial_knots(&p, 11);
            let (f0, g) = obj.gradient(&x).unwrap();
            assert!((f0 - obj.loss(&x).unwrap()).abs() < 1e-12);
            let h = p.fd_step;
            for i in 0..x.len() {
                let mut y = x.clone();
                y[i] += h;
                let fp = obj.loss(&y).unwrap();
                y[i] -= 2.0 * h;
                let fm = obj.loss(&y).unwrap();
                let want = (fp - fm) / (2.0 * h);
                assert!((g[i] - want).abs() < 1e-9, "N = {n}, knot {i}: {} vs {want}", g[i]);
            }
        }
    }

    #[test]
    fn bfgs_finds_quadratic_minimum() {
        // a single free atom: the loss is smooth and its minimum is zero
        let c = ChainConfig::new(1, 4.0, C6_RB70S, Order::Z2, 1.0).unwrap();
        let mut p = OptimizationProblem::new(c, 0.5);
        p.n_segments = 2;
        p.delta_start = 0.0;
        p.delta_end = 0.0;
        let obj = Objective::adaptive(&p, 1e-10).unwrap();
        let r = bfgs(&obj, &[1.0], 50, 0).unwrap();
        assert!(r.loss < 1e-8, "{r:?}");
        assert!(r.knots[0].abs() < 1e-2);
        for w in r.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn restart_seeds_are_deterministic() {
        assert_eq!(restart_seeds(5, 4), restart_seeds(5, 4));
        assert_ne!(restart_seeds(5, 4), restart_seeds(6, 4));
        assert_eq!(restart_seeds(5, 2)[..], restart_seeds(5, 4)[..2]);
    }

    #[test]
    fn invalid_problems() {
        let mut p = problem(3);
        p.restarts = 0;
        assert!(p.validate().is_err());
        let mut p = problem(3);
        p.tau = 0.3;
        assert!(matches!(p.validate(), Err(Error::ScheduleTooShort { .. })));
    }
}
