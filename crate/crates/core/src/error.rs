use thiserror::Error;

use crate::mesh::BoundaryTag;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("no boundary edges or triangles carry tag {0}")]
    TagEmpty(String),

    #[error("edge ({0}, {1}) is not a boundary edge of the requested side")]
    NotBoundaryEdge(usize, usize),

    #[error("tensor is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("incompatible Neumann data: defect {defect:.3e} exceeds {allowed:.3e}")]
    IncompatibleData { defect: f64, allowed: f64 },

    #[error("normal equations are singular: {0}")]
    SingularNormalEquations(String),

    #[error("evaluation point lies on the outer boundary (distance {0:.3e})")]
    OnBoundary(f64),

    #[error("bump support is not inside the heart domain")]
    SupportNotInside,

    #[error("field is not in the discrete H^2_0 class: {0}")]
    NotH20(String),

    #[error("alpha_i = 0 is only handled by the null-space generator")]
    AlphaIZero,

    #[error("constant must be positive: {0}")]
    NotPositive(String),

    #[error("mode {0} is not supported")]
    ModeUnsupported(usize),

    #[error("Lame parameters violate strong ellipticity: {0}")]
    NotElliptic(String),

    #[error("kernel evaluated at the pole")]
    AtSingularity,

    #[error("degenerate reduction: alpha_i + alpha_e * gamma = 0")]
    DegenerateReduction,

    #[error("unstable time step: {0}")]
    UnstableStep(String),

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("field lies in the operator kernel")]
    KernelField,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn tag_empty(tag: BoundaryTag) -> Self {
        Error::TagEmpty(format!("{tag:?}"))
    }
}
