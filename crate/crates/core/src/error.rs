use thiserror::Error;

pub type Result<T> = std::result::Result<T, SemError>;

#[derive(Debug, Error)]
pub enum SemError {
    #[error("invalid polynomial order {0}: must be at least 1")]
    InvalidOrder(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("affine map has non-positive determinant {0}")]
    InvertedMap(f64),

    #[error("element {element} has non-positive Jacobian determinant {det} at a quadrature point")]
    InvertedElement { element: usize, det: f64 },

    #[error(
        "element {element} is not affine: Jacobian varies by {deviation:e} across the element"
    )]
    NonAffineElement { element: usize, deviation: f64 },

    #[error("shape mismatch: expected {expected} entries, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("malformed mesh: {0}")]
    MalformedMesh(String),

    #[error("operator is not SPD: <p, w, c> = {0} at iteration {1}")]
    NotSpd(f64, usize),

    #[error("conjugate gradient diverged: rho = {0} at iteration {1}")]
    Diverged(f64, usize),

    #[error("unknown machine preset '{0}'")]
    UnknownPreset(String),

    #[error("invalid machine spec: {0}")]
    InvalidMachine(String),

    #[error("solve statistics do not match the problem: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(SemError::Shape { expected, actual })
    }
}
