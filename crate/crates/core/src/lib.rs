//! Simulation and fast-ramp optimisation for one-dimensional Rydberg atom
//! chains.

pub mod diagnostics;
pub mod error;
pub mod hamiltonian;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod propagator;
pub mod scalar;
pub mod scanner;
pub mod spectrum;

pub use error::{Error, Result};
pub use model::{BareState, ChainConfig, OmegaEnvelope, Order, PulseSchedule};
pub use scalar::Real;

pub type Chain = ChainConfig<f64>;
pub type Schedule = PulseSchedule<f64>;
pub type Envelope = OmegaEnvelope<f64>;
pub type State = propagator::StateVector<f64>;
