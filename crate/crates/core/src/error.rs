use thiserror::Error;

use crate::minimizer::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("collision between bodies {i} and {j}: distance {distance:e} is below the floor {floor:e}")]
    Collision {
        i: usize,
        j: usize,
        distance: f64,
        floor: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("grid with {nodes} nodes cannot resolve {harmonics} odd harmonics (needs at least {required})")]
    GridTooCoarse {
        nodes: usize,
        harmonics: usize,
        required: usize,
    },

    #[error("loop has zero kinetic energy; no period can be assigned")]
    DegenerateLoop,

    #[error("directional identity mismatch: closed form {closed_form:e} vs inner product {inner_product:e}")]
    IdentityMismatch { closed_form: f64, inner_product: f64 },

    #[error("minimizer did not converge after {iters} iterations (projected gradient {grad_norm:e}, endpoint residual {endpoint_res:e})")]
    NonConvergence {
        iters: usize,
        grad_norm: f64,
        endpoint_res: f64,
        best: Box<SolveReport>,
    },

    #[error("collision guard tripped after {iters} iterations: no admissible step keeps the minimum distance above {guard:e}")]
    CollisionGuardTripped { iters: usize, guard: f64 },

    #[error("integrator blow-up at step {step}: pairwise distance {distance:e}")]
    IntegratorBlowup { step: usize, distance: f64 },

    #[error("crossing set is empty: no body reaches radius {outer:e} or {inner:e}")]
    SEmpty { outer: f64, inner: f64 },

    #[error("sweep failed: {failed} of {total} radii did not produce a record")]
    SweepFailed { failed: usize, total: usize },

    #[error("insufficient data: need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Collision { .. }
                | Error::DegenerateLoop
                | Error::IdentityMismatch { .. }
                | Error::NonConvergence { .. }
                | Error::CollisionGuardTripped { .. }
                | Error::IntegratorBlowup { .. }
                | Error::SEmpty { .. }
                | Error::SweepFailed { .. }
                | Error::InsufficientData { .. }
        )
    }

    /// Stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Collision { .. } => "Collision",
            Error::Domain(_) => "Domain",
            Error::Validation(_) => "Validation",
            Error::GridTooCoarse { .. } => "GridTooCoarse",
            Error::DegenerateLoop => "DegenerateLoop",
            Error::IdentityMismatch { .. } => "IdentityMismatch",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::CollisionGuardTripped { .. } => "CollisionGuardTripped",
            Error::IntegratorBlowup { .. } => "IntegratorBlowup",
            Error::SEmpty { .. } => "SEmpty",
            Error::SweepFailed { .. } => "SweepFailed",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::MalformedTrajectory(_) => "MalformedTrajectory",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
