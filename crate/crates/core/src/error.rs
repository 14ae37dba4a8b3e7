use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("`{key}`: {constraint}")]
    Config { key: String, constraint: String },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("eigenpair residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error(
        "no physical resonance survived the filters (leak threshold {leak_threshold}); \
         the CAP may be absorbing the states, try a larger box or weaker cap_strength"
    )]
    NoPhysicalStates { leak_threshold: f64 },

    #[error("only {found} physical resonance(s) found, {needed} required")]
    TooFewStates { found: usize, needed: usize },

    #[error("no CAP plateau found (best flatness {flatness:.3e}); enlarge the box")]
    NoPlateau { flatness: f64 },

    #[error("simplex search exhausted {iterations} iterations without converging")]
    MaxIterations { iterations: usize },

    #[error("state continuity lost between beta = {beta_from:.6} and {beta_to:.6} (overlap {overlap:.3})")]
    Continuity { beta_from: f64, beta_to: f64, overlap: f64 },

    #[error("self-consistent iteration did not converge after {iterations} iterations (last change {change:.3e}); try a smaller relaxation")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("nonlinear branch jumped: overlap with previous iterate {overlap:.3} < 0.5")]
    BranchJump { overlap: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}
