use std::f64::consts::TAU;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use nqn_core::diagnostics::{adiabatic_projections, propagate_with_observables, sample_grid};
use nqn_core::hamiltonian::build_full;
use nqn_core::io::{load_schedule, schedule_to_json, RunConfig};
use nqn_core::model::default_nqn_seed;
use nqn_core::propagator::{PropagationOptions, Propagator, StateVector};
use nqn_core::scanner::{linspace, scan as phase_scan};
use nqn_core::spectrum::{bare_crossings, crossing_times, eigensystem, EigenFrame};
use nqn_core::{Chain, Error, Schedule};

use crate::output::Outputs;
use crate::Common;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. }
            | Error::Congruence { .. }
            | Error::ScheduleTooShort { .. }
            | Error::InvalidSchedule(_)
            | Error::DimensionCap { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidTolerance(_)
            | Error::UnknownObservable(_)
            | Error::Json(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct Options<'a> {
    tol: f64,
    sample_us: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    knots: Option<&'a [f64]>,
}

impl<'a> Options<'a> {
    fn new(c: &Common) -> Self {
        Self { tol: c.tol, sample_us: c.sample_us, schedule: None, grid: None, knots: None }
    }
}

/// Reads the config and applies flag overrides.
fn resolve(c: &Common) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&c.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", c.config.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(r) = c.restarts {
        cfg.restarts = r;
    }
    if let Some(t) = c.tau_us {
        cfg.tau_us = t;
    }
    if let Some(s) = c.segments {
        cfg.n_segments = s;
    }
    if !(c.tol > 0.0) {
        return Err(CliError::Config(format!("tol: {} must be positive", c.tol)));
    }
    if !(c.sample_us > 0.0) {
        return Err(CliError::Config(format!("sample-us: {} must be positive", c.sample_us)));
    }
    cfg.validate()?;
    Ok(cfg.resolved()?)
}

fn trace_columns(n: usize) -> Vec<String> {
    let mut names: Vec<String> = ["F", "DeltaS", "n_tot"].iter().map(|s| s.to_string()).collect();
    names.extend((1..=n).map(|i| format!("n_{i}")));
    names
}

/// Observable trace of `schedule` from |D⟩: t_us, delta_mhz, omega_mhz, F,
/// ΔS, n_tot and the site occupations.
fn trace(chain: &Chain, schedule: &Schedule, c: &Common) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let prop = Propagator::new(chain)?;
    let times = sample_grid(0.0, schedule.total_duration(), c.sample_us);
    let names = trace_columns(chain.n_atoms());
    let series = propagate_with_observables(
        &prop,
        chain,
        &StateVector::basis(chain.disordered()),
        schedule,
        &times,
        &names,
        &PropagationOptions::with_tol(c.tol),
    )?;
    let mut header = vec!["t_us".to_string(), "delta_mhz".into(), "omega_mhz".into()];
    header.extend(names);
    let rows = series
        .rows
        .into_iter()
        .map(|r| {
            let (om, d) = schedule.evaluate(r[0])?;
            let mut row = vec![r[0], d, om];
            row.extend_from_slice(&r[1..]);
            Ok(row)
        })
        .collect::<nqn_core::Result<Vec<_>>>()?;
    Ok((header, rows))
}

fn check_compatible(cfg: &RunConfig, schedule: &Schedule) -> Result<(), CliError> {
    let hold = schedule.envelope().hold;
    if hold != cfg.omega_mhz {
        return Err(CliError::Config(format!(
            "schedule omega hold_mhz {hold} differs from config omega_mhz {}",
            cfg.omega_mhz
        )));
    }
    Ok(())
}

pub fn optimize(c: &Common) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let mut problem = cfg.problem()?;
    problem.settings.final_tol = c.tol;
    let report = problem.optimize()?;
    let schedule = problem.schedule(&report.best_knots)?.with_envelope(cfg.envelope())?;
    let chain = cfg.chain()?;
    let (header, rows) = trace(&chain, &schedule, c)?;

    let mut out = Outputs::new(&c.out)?;
    out.json("report.json", &report)?;
    out.text("best_schedule.json", &schedule_to_json(&schedule)?)?;
    out.csv("trace.csv", &header, rows)?;
    out.finish("optimize", cfg.seed, &cfg, &Options::new(c))
}

pub fn evolve(c: &Common, schedule_path: &Path) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let schedule = load_schedule(schedule_path)?;
    check_compatible(&cfg, &schedule)?;
    let (header, rows) = trace(&cfg.chain()?, &schedule, c)?;
    let mut out = Outputs::new(&c.out)?;
    out.csv("trace.csv", &header, rows)?;
    let opts = Options { schedule: Some(schedule_path), ..Options::new(c) };
    out.finish("evolve", cfg.seed, &cfg, &opts)
}

pub fn spectrum(c: &Common, schedule_path: &Path) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let schedule = load_schedule(schedule_path)?;
    check_compatible(&cfg, &schedule)?;
    let chain = cfg.chain()?;
    // fail on the dense cap before propagating
    build_full(&chain, chain.omega(), 0.0)?;
    let prop = Propagator::new(&chain)?;
    let times = sample_grid(0.0, schedule.total_duration(), c.sample_us);

    let mut flow = Vec::new();
    let mut gamma = Vec::new();
    let mut prev: Option<EigenFrame<f64>> = None;
    let opts = PropagationOptions::with_tol(c.tol);
    prop.for_each_sample(&StateVector::basis(chain.disordered()), &schedule, &times, &opts, |t, psi| {
        let (om, d) = schedule.evaluate(t)?;
        let mut frame = eigensystem(&build_full(&chain, om, d)?, t)?;
        if let Some(p) = &prev {
            frame.track_from(p)?;
        }
        for (j, (&e, &label)) in frame.values().iter().zip(frame.labels()).enumerate() {
            flow.push(vec![t.to_string(), d.to_string(), om.to_string(), (j + 1).to_string(), label.to_string(), (e / TAU).to_string()]);
        }
        for g in adiabatic_projections(psi, &frame)? {
            gamma.push(vec![t.to_string(), g.label.to_string(), g.probability.to_string()]);
        }
        prev = Some(frame);
        Ok(())
    })?;

    let mut crossings = Vec::new();
    let omega = chain.omega();
    for delta in bare_crossings(&chain)? {
        let hits = crossing_times(&schedule, delta);
        let t = hits.first().map_or(String::new(), |t| t.to_string());
        crossings.push(vec![delta.to_string(), (delta / omega).to_string(), t]);
    }

    let mut out = Outputs::new(&c.out)?;
    let h = |cols: &[&str]| cols.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    out.csv("eigenflow.csv", &h(&["t_us", "delta_mhz", "omega_mhz", "column", "label", "energy_mhz"]), flow)?;
    out.csv("gamma.csv", &h(&["t_us", "label", "gamma"]), gamma)?;
    out.csv("crossings.csv", &h(&["delta_mhz", "delta_over_omega", "first_t_us"]), crossings)?;
    let opts = Options { schedule: Some(schedule_path), ..Options::new(c) };
    out.finish("spectrum", cfg.seed, &cfg, &opts)
}

/// Parses "lo:hi:steps" into evenly spaced values.
fn axis(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("grid: cannot parse axis {spec:?}, expected lo:hi:steps"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::Config(format!("grid: axis {spec:?} is empty")));
    }
    Ok(linspace(lo, hi, n))
}

pub fn parse_grid(grid: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (d, r) = grid
        .split_once(',')
        .ok_or_else(|| CliError::Config(format!("grid: expected two axes in {grid:?}")))?;
    Ok((axis(d)?, axis(r)?))
}

pub fn scan(c: &Common, grid: &str) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let (deltas, ratios) = parse_grid(grid)?;
    if ratios.iter().any(|&r| !(r > 0.0)) {
        return Err(CliError::Config("grid: R_b/a values must be positive".into()));
    }
    let points = phase_scan(&cfg.chain()?, &deltas, &ratios)?;
    let header: Vec<String> =
        ["delta_over_omega", "rb_over_a", "label", "order_strength"].iter().map(|s| s.to_string()).collect();
    let rows = points.iter().map(|p| {
        vec![p.delta_over_omega.to_string(), p.rb_over_a.to_string(), p.label.to_string(), p.order_strength.to_string()]
    });
    let mut out = Outputs::new(&c.out)?;
    out.csv("phase_map.csv", &header, rows)?;
    let opts = Options { grid: Some(grid), ..Options::new(c) };
    out.finish("scan", cfg.seed, &cfg, &opts)
}

pub fn export(c: &Common, knots: Option<&[f64]>) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let problem = cfg.problem()?;
    let om = cfg.omega_mhz;
    let schedule = match knots {
        Some(k) => {
            let interior: Vec<f64> = k.iter().map(|x| x * om).collect();
            problem.schedule(&interior)?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            default_nqn_seed(&problem.config, cfg.tau_us, cfg.n_segments, &mut rng)?
        }
    }
    .with_envelope(cfg.envelope())?;
    let mut out = Outputs::new(&c.out)?;
    out.text("schedule.json", &schedule_to_json(&schedule)?)?;
    let opts = Options { knots, ..Options::new(c) };
    out.finish("schedule export", cfg.seed, &cfg, &opts)
}
