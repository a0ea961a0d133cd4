use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("precision exhausted after {depth} partial quotients at {bits} bits")]
    PrecisionExhausted { depth: usize, bits: u32 },

    #[error("index {index} out of range (stored depth {depth})")]
    IndexOutOfRange { index: usize, depth: usize },

    #[error("phase is singular at scale {n}: distance to the excluded set is below the error radius")]
    SingularPhase { n: usize },

    #[error("scale q_{n} = {q} is below the large-scale threshold {threshold}")]
    SmallScale { n: usize, q: String, threshold: u64 },

    #[error("construction failed: {0}")]
    ConstructionFailed(String),

    #[error("wrong branch: a_(n+1) = {a} (expected 1, 2 or 3)")]
    WrongBranch { a: String },

    #[error("site {site} is singular (|cos| below error radius)")]
    SingularSite { site: i64 },

    #[error("ill-conditioned node system: estimate {estimate:.3e} exceeds budget {budget:.3e}")]
    IllConditioned { estimate: f64, budget: f64 },

    #[error("nodes {i} and {j} coincide mod 1")]
    DegenerateNodes { i: usize, j: usize },

    #[error("ell = {ell} outside the admissible range |ell| <= {bound}")]
    RangeViolation { ell: i64, bound: String },

    #[error("site {y} is resonant: dist(y, q_n Z) = {dist} <= b_n = {b_n}")]
    ResonantY { y: i64, dist: i64, b_n: i64 },

    #[error("eigenvector iteration did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("energy {energy} is within {gap:.3e} of an eigenvalue of the box")]
    NearEigenvalue { energy: f64, gap: f64 },

    #[error("eigenfunction vanishes numerically at 0 and -1")]
    NotNormalizable,

    #[error("no integral tau_n q_n in ({lo}, {hi}] for q_n = {q}")]
    EmptyInterval { q: u64, lo: f64, hi: f64 },

    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },
}

impl Error {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
