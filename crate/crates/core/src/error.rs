use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wavevector ({0}, {1}) lies outside the grid truncation")]
    OutsideTruncation(i32, i32),
    #[error("coefficients at ({0}, {1}) break the reality condition")]
    RealityViolation(i32, i32),
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("second moment must be nonnegative, got {0}")]
    NegativeMoment(f64),
    #[error("measures cannot be compared: {0}")]
    MeasureMismatch(String),
    #[error("linear program failed: {0}")]
    Solver(String),
    #[error("non-finite coefficient in particle {particle} at step {step}")]
    NonFinite { particle: usize, step: u64 },
    #[error("time step {dt} exceeds the stability bound {dt_max}")]
    StepTooLarge { dt: f64, dt_max: f64 },
    #[error("assumption `{id}` violated: max ratio {ratio}")]
    AssumptionViolated { id: String, ratio: f64 },
    #[error("parameters are not dissipative (nu = {nu}, required > {required})")]
    NotDissipative { nu: f64, required: f64 },
    #[error("trajectory carries no energy ledger")]
    MissingLedger,
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing report: {0}")]
    MissingReport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
