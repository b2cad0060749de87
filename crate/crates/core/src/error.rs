use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("input is not complex symmetric (defect {defect:.3e})")]
    AsymmetricInput { defect: f64 },
    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("matrix does not commute with the supplied diagonal (defect {defect:.3e})")]
    CommutationViolation { defect: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("reflector norm {norm:.6} is not below 1 - margin")]
    ReflectorTooStrong { norm: f64 },
    #[error("block is numerically singular (condition {condition:.3e}){}", omega_suffix(.omega))]
    SingularBlock { condition: f64, omega: Option<f64> },
    #[error("scattering matrix is not reciprocal (defect {defect:.3e})")]
    NotReciprocal { defect: f64 },
    #[error("scattering matrix is not lossless (defect {defect:.3e})")]
    NotLossless { defect: f64 },
    #[error("window weights sum to zero")]
    DegenerateWindow,
    #[error("peeling step is ill conditioned (condition {condition:.3e} at omega = {omega:.6e})")]
    NearSingularPeel { condition: f64, omega: f64 },
    #[error("zeroth impulse weight has norm {norm:.6}, not below 1 - margin")]
    TooStrong { norm: f64 },
    #[error("least-squares fit is underdetermined: {0}")]
    UnderdeterminedFit(String),
    #[error("unitary section is outside the principal logarithm branch")]
    BranchOverflow,
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("layer {index}: {source}")]
    AtLayer {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn omega_suffix(omega: &Option<f64>) -> String {
    match omega {
        Some(w) => format!(" at omega = {w:.6e}"),
        None => String::new(),
    }
}

impl Error {
    pub fn at_layer(self, index: usize) -> Self {
        Error::AtLayer {
            index,
            source: Box::new(self),
        }
    }
}
