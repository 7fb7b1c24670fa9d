//! JSON run configurations and schedule documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    default_spacing_over_rb, ChainConfig, OmegaEnvelope, Order, PulseSchedule, C6_RB70S, RESOLUTION_FLOOR_US,
};
use crate::optimizer::{OptimizationProblem, DEFAULT_DELTA_END, DEFAULT_DELTA_START, DEFAULT_RESTARTS, DEFAULT_SEGMENTS};

fn default_order() -> u8 {
    2
}
fn default_omega() -> f64 {
    1.0
}
fn default_c6() -> f64 {
    C6_RB70S
}
fn default_tau() -> f64 {
    1.8
}
fn default_segments() -> usize {
    DEFAULT_SEGMENTS
}
fn default_start() -> f64 {
    DEFAULT_DELTA_START
}
fn default_end() -> f64 {
    DEFAULT_DELTA_END
}
fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

/// Run configuration document. Only `n_atoms` is required; a missing
/// `spacing_um` means the default fraction of R_b for the order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_atoms: usize,
    #[serde(default = "default_order")]
    pub order: u8,
    #[serde(default = "default_omega")]
    pub omega_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_um: Option<f64>,
    #[serde(default = "default_c6")]
    pub c6_mhz_um6: f64,
    #[serde(default = "default_tau")]
    pub tau_us: f64,
    #[serde(default = "default_segments")]
    pub n_segments: usize,
    #[serde(default = "default_start")]
    pub delta_start_over_omega: f64,
    #[serde(default = "default_end")]
    pub delta_end_over_omega: f64,
    #[serde(default)]
    pub idle_us: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl RunConfig {
    pub fn new(n_atoms: usize) -> Self {
        Self {
            n_atoms,
            order: default_order(),
            omega_mhz: default_omega(),
            spacing_um: None,
            c6_mhz_um6: default_c6(),
            tau_us: default_tau(),
            n_segments: default_segments(),
            delta_start_over_omega: default_start(),
            delta_end_over_omega: default_end(),
            idle_us: 0.0,
            seed: 0,
            restarts: default_restarts(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig {
            field: "config",
            reason: e.to_string(),
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Copy with every default filled in.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.spacing_um = Some(self.chain()?.spacing());
        Ok(c)
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: &str| Err(Error::config(field, reason));
        if self.n_atoms == 0 {
            return bad("n_atoms", "must be at least 1");
        }
        if !(2..=4).contains(&self.order) {
            return bad("order", "must be 2, 3 or 4");
        }
        if !(self.omega_mhz > 0.0 && self.omega_mhz.is_finite()) {
            return bad("omega_mhz", "must be positive");
        }
        if let Some(a) = self.spacing_um {
            if !(a > 0.0 && a.is_finite()) {
                return bad("spacing_um", "must be positive");
            }
        }
        if !(self.c6_mhz_um6 > 0.0 && self.c6_mhz_um6.is_finite()) {
            return bad("c6_mhz_um6", "must be positive");
        }
        if self.n_segments < 2 {
            return bad("n_segments", "need at least two segments");
        }
        if !(self.tau_us > 0.0) || self.tau_us < self.n_segments as f64 * RESOLUTION_FLOOR_US * (1.0 - 1e-9) {
            return Err(Error::config(
                "tau_us",
                format!(
                    "{} us is shorter than {} segments of {} us",
                    self.tau_us, self.n_segments, RESOLUTION_FLOOR_US
                ),
            ));
        }
        if !self.delta_start_over_omega.is_finite() {
            return bad("delta_start_over_omega", "must be finite");
        }
        if !self.delta_end_over_omega.is_finite() {
            return bad("delta_end_over_omega", "must be finite");
        }
        if !(self.idle_us >= 0.0 && self.idle_us.is_finite()) {
            return bad("idle_us", "must be >= 0");
        }
        if self.restarts == 0 {
            return bad("restarts", "must be at least 1");
        }
        self.chain().map(|_| ())
    }

    pub fn chain(&self) -> Result<ChainConfig<f64>> {
        let order = Order::new(self.order)?;
        match self.spacing_um {
            Some(a) => ChainConfig::new(self.n_atoms, a, self.c6_mhz_um6, order, self.omega_mhz),
            None => ChainConfig::with_spacing_ratio(
                self.n_atoms,
                default_spacing_over_rb(order),
                self.c6_mhz_um6,
                order,
                self.omega_mhz,
            ),
        }
    }

    /// Ω envelope of exported schedules: held on during the program, off
    /// for `idle_us` on either side.
    pub fn envelope(&self) -> OmegaEnvelope<f64> {
        OmegaEnvelope::with_idles(self.omega_mhz, self.idle_us)
    }

    pub fn problem(&self) -> Result<OptimizationProblem> {
        let mut p = OptimizationProblem::new(self.chain()?, self.tau_us);
        p.n_segments = self.n_segments;
        p.delta_start = self.delta_start_over_omega;
        p.delta_end = self.delta_end_over_omega;
        p.restarts = self.restarts;
        p.seed = self.seed;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnotDoc {
    pub t_us: f64,
    pub delta_mhz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaDoc {
    pub hold_mhz: f64,
    #[serde(default)]
    pub rise_us: f64,
    #[serde(default)]
    pub fall_us: f64,
    #[serde(default)]
    pub idle_lead_us: f64,
    #[serde(default)]
    pub idle_tail_us: f64,
}

/// Schedule document: knot times relative to the program start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDoc {
    pub tau_us: f64,
    pub knots: Vec<KnotDoc>,
    pub omega: OmegaDoc,
}

impl From<&PulseSchedule<f64>> for ScheduleDoc {
    fn from(s: &PulseSchedule<f64>) -> Self {
        let e = s.envelope();
        Self {
            tau_us: s.tau(),
            knots: s
                .knot_times()
                .iter()
                .zip(s.knot_deltas())
                .map(|(&t_us, &delta_mhz)| KnotDoc { t_us, delta_mhz })
                .collect(),
            omega: OmegaDoc {
                hold_mhz: e.hold,
                rise_us: e.rise,
                fall_us: e.fall,
                idle_lead_us: e.idle_lead,
                idle_tail_us: e.idle_tail,
            },
        }
    }
}

impl ScheduleDoc {
    pub fn to_schedule(&self) -> Result<PulseSchedule<f64>> {
        let times: Vec<f64> = self.knots.iter().map(|k| k.t_us).collect();
        if times.last() != Some(&self.tau_us) {
            return Err(Error::InvalidSchedule("last knot must sit at tau_us".into()));
        }
        let o = &self.omega;
        let envelope = OmegaEnvelope {
            rise: o.rise_us,
            hold: o.hold_mhz,
            fall: o.fall_us,
            idle_lead: o.idle_lead_us,
            idle_tail: o.idle_tail_us,
        };
        PulseSchedule::new(times, self.knots.iter().map(|k| k.delta_mhz).collect(), envelope)
    }
}

pub fn schedule_to_json(s: &PulseSchedule<f64>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ScheduleDoc::from(s))?)
}

pub fn schedule_from_json(text: &str) -> Result<PulseSchedule<f64>> {
    let doc: ScheduleDoc = serde_json::from_str(text)
        .map_err(|e| Error::InvalidSchedule(format!("schedule document: {e}")))?;
    doc.to_schedule()
}

pub fn load_schedule(path: &Path) -> Result<PulseSchedule<f64>> {
    schedule_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimal_config_materialises_defaults() {
        let c = RunConfig::from_json(r#"{"n_atoms": 7}"#).unwrap();
        assert_eq!(c, RunConfig::new(7));
        let r = c.resolved().unwrap();
        let rb = (C6_RB70S / 1.0f64).powf(1.0 / 6.0);
        assert!((r.spacing_um.unwrap() - 0.58 * rb).abs() < 1e-12);
        assert_eq!(RunConfig::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn errors_name_the_field() {
        let field = |text: &str| match RunConfig::from_json(text) {
            Err(Error::InvalidConfig { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field(r#"{"n_atoms": 7, "tau_us": 0.3}"#), "tau_us");
        assert_eq!(field(r#"{"n_atoms": 7, "order": 5}"#), "order");
        assert_eq!(field(r#"{"n_atoms": 7, "omega_mhz": -1}"#), "omega_mhz");
        assert_eq!(field(r#"{"n_atoms": 7, "restarts": 0}"#), "restarts");
        assert_eq!(field(r#"{"n_atoms": 7, "spacing": 5.0}"#), "config");
        assert!(matches!(
            RunConfig::from_json(r#"{"n_atoms": 8}"#),
            Err(Error::Congruence { .. })
        ));
    }

    #[test]
    fn schedule_round_trip_is_exact() {
        let c = RunConfig::new(7).chain().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = crate::model::default_nqn_seed(&c, 1.8, 8, &mut rng).unwrap();
            let s = s.with_envelope(OmegaEnvelope::with_idles(1.0, 0.15)).unwrap();
            let back = schedule_from_json(&schedule_to_json(&s).unwrap()).unwrap();
            assert_eq!(back, s);
            for (a, b) in back.knot_deltas().iter().zip(s.knot_deltas()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn schedule_document_shape() {
        let s = PulseSchedule::linear_ramp(4.0, -2.5, 2.5, OmegaEnvelope::constant(1.0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&schedule_to_json(&s).unwrap()).unwrap();
        assert_eq!(v["tau_us"], 4.0);
        assert_eq!(v["knots"][1]["delta_mhz"], 2.5);
        assert_eq!(v["omega"]["hold_mhz"], 1.0);
        assert!(schedule_from_json(r#"{"tau_us": 1, "knots": [], "omega": {"hold_mhz": 1}}"#).is_err());
    }
}
