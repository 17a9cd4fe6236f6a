use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite coordinate in phase point")]
    NonFinite,

    #[error("invalid symbol: {0}")]
    InvalidSymbol(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symbol is not a polynomial of degree <= 2")]
    NotQuadratic,

    #[error("quadratic symbol is not elliptic: no rotation e^(i theta) q has positive definite real part")]
    NotElliptic,

    #[error("symbol depends on the base variables; an action-only symbol is required")]
    NotActionOnly,

    #[error("base symbol is not completely integrable: {{Re p, Im p}} is not the zero symbol")]
    NotIntegrable,

    #[error("generator is not real-valued on real points")]
    GeneratorNotReal,

    #[error("flow step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("flow exceeded {max_steps} steps")]
    TooManySteps { max_steps: usize },

    #[error("|t| = {t} exceeds t_max = {t_max}")]
    TimeOutOfRange { t: f64, t_max: f64 },

    #[error("Newton inversion failed at z = {re} + {im}i")]
    SingularMap { re: f64, im: f64 },

    #[error("action map Jacobian singular on {bad} of {total} cells")]
    SingularJacobian { bad: usize, total: usize },

    #[error("test function support leaks out of the integration box (f(p) = {value} on the boundary)")]
    SupportLeaksBox { value: f64 },

    #[error("symbol on the box boundary comes within {margin} of the window; at least {required} is required")]
    BoxMargin { margin: f64, required: f64 },

    #[error("matrix dimension {dim} exceeds cap {cap}")]
    MatrixTooLarge { dim: usize, cap: usize },

    #[error("eigenvalue solver failed: {0}")]
    Eigen(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
