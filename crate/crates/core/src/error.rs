use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("element {element} has zero length")]
    ZeroLength { element: u32 },

    #[error("stiffness with unit areas is not positive definite for load case {load_case} (rigid-body motion)")]
    RigidBodyMotion { load_case: String },

    #[error("load case {load_case}: force is not in the range of the stiffness (residual {residual:.3e})")]
    RangeFailure { load_case: String, residual: f64 },

    #[error("load case {load_case}: compliance infimum {infimum} is not below the bound {cbar}")]
    InfeasibleDirection {
        load_case: String,
        infimum: f64,
        cbar: f64,
    },

    #[error("load case {load_case}: forces outside the scaled image are not carried by the fixed elements")]
    FixedPathFailure { load_case: String },

    #[error("scaling direction is degenerate: no feasible factor within 2^60")]
    DegenerateDirection,

    #[error("relaxation order {order} is too small for constraint degree {degree}")]
    OrderTooSmall { order: usize, degree: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("SDPA line {line}: {message}")]
    SdpaParse { line: usize, message: String },

    #[error("SDP solver: {0}")]
    Solver(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
