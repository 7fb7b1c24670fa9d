use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("chain of {n_atoms} atoms cannot host Z{order} order: need n_atoms = 1 (mod {order})")]
    Congruence { n_atoms: usize, order: u8 },

    #[error("time {t} us outside schedule domain [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("tau = {tau} us is too short for {n_segments} segments at a {floor} us resolution floor")]
    ScheduleTooShort { tau: f64, n_segments: usize, floor: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("{n_atoms} atoms exceed the dense dimension cap of {cap} atoms")]
    DimensionCap { n_atoms: usize, cap: usize },

    #[error("pair interaction needs two distinct sites, got {0} twice")]
    SameSite(usize),

    #[error("site {site} outside chain of {n_atoms} atoms")]
    SiteOutOfRange { site: usize, n_atoms: usize },

    #[error("state is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("state has weight {0:e} outside the propagation subspace")]
    OutsideSubspace(f64),

    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown observable `{0}`")]
    UnknownObservable(String),

    #[error("sweep rate must be positive, got {0}")]
    NonPositiveRate(f64),

    #[error("measurement model needs an odd chain, got {0} atoms")]
    EvenChain(usize),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { field, reason: reason.into() }
    }
}
