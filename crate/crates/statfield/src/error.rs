use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("phase undefined at node near x = {x} (index {index})")]
    Node { index: usize, x: f64 },
    #[error("division by sub-floor density at index {index}")]
    DivisionByFloor { index: usize },
    #[error("blow-up at t = {t}: {what}")]
    BlowUp { t: f64, what: String },
    #[error("normalization drift {drift:e} at t = {t}")]
    NormDrift { t: f64, drift: f64 },
    #[error("index n = {0} is not admissible")]
    BadIndex(i32),
    #[error("jet order above 4 required")]
    JetOverflow,
    #[error("Laurent exponent outside [-16, 16]")]
    ExponentOverflow,
    #[error("target {target} outside the attainable range ({lo}, {hi})")]
    OutOfRange { target: f64, lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
