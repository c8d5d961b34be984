use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported model specification: {0}")]
    UnsupportedSpec(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error(
        "propagator blow-up near t = {time}: entries exceed 1e300 along direction ({:.6}, {:.6})",
        direction[0],
        direction[1]
    )]
    Blowup { time: f64, direction: [f64; 2] },

    #[error("no exponential dichotomy: {0}")]
    NoDichotomy(String),

    #[error("truncation radius {given} too small, need at least {required}")]
    RadiusTooSmall { given: f64, required: f64 },

    #[error("solver refused to run: {0}")]
    CertificateRefused(String),

    #[error("Picard iteration did not converge in {iterations} sweeps (update ratios {ratios:?})")]
    Divergence { iterations: usize, ratios: Vec<f64> },

    #[error("anchor defect {defect:e} exceeds tolerance {tol:e}")]
    AnchorDefect { defect: f64, tol: f64 },

    #[error("resonance: delta = {delta} is within {margin:e} of {n}^2")]
    Resonance { n: u64, delta: f64, margin: f64 },

    #[error("smallness condition violated: need L1 < {max_l1}")]
    Smallness { max_l1: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid schema at {path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
