use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {what} at node {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("assumption {id} violated: {detail}")]
    Assumption { id: &'static str, detail: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("time mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("CFL condition violated (number {number:.3e}); admissible dt <= {admissible_dt:.6e}")]
    Cfl { number: f64, admissible_dt: f64 },

    #[error("CFL refinement floor reached at t = {time:.6}: {substeps} substeps still violate the bound")]
    CflRefinement { time: f64, substeps: usize },

    #[error("density undershoot {min:.3e} at t = {time:.6} (limit -1e-13)")]
    NegativeDensity { min: f64, time: f64 },

    #[error("Hopf-Cole variable reached {min:.3e} at t = {time:.6}; refine dt")]
    NonPositiveHopfCole { min: f64, time: f64 },

    #[error("mass mismatch: {0:.3e} vs {1:.3e}")]
    MassMismatch(f64, f64),

    #[error("missing estimate: {0}")]
    MissingEstimate(&'static str),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}
