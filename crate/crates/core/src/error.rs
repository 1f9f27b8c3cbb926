use thiserror::Error;

/// Errors raised by the reduction pipeline.
///
/// Variants carry enough context to be reported as machine-readable JSON by
/// the command-line front end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("box is not positively invariant: Pi({point:?}) = {image:?} leaves the box")]
    NotInvariant { point: Vec<f64>, image: Vec<f64> },

    #[error(
        "jacobian disagrees with finite differences at {point:?} (relative error {error:.3e})"
    )]
    JacobianMismatch { point: Vec<f64>, error: f64 },

    #[error("no stable fixed point found")]
    NoStableFixedPoint,

    #[error("fixed point {point:?} is marginal (spectral radius {spectral_radius})")]
    MarginalFixedPoint {
        point: Vec<f64>,
        spectral_radius: f64,
    },

    #[error("could not build an invariant ball around stable point {index} (radius fell to {radius:.3e})")]
    BallConstructionFailed { index: usize, radius: f64 },

    #[error("Lyapunov drift violated at {point:?}: drift {drift:.6e}")]
    DriftViolated { point: Vec<f64>, drift: f64 },

    #[error("ball {ball} contains no grid node")]
    EmptyBall { ball: usize },

    #[error("row {row} of the kernel has raw mass {mass:e}; sigma too small for the grid")]
    DegenerateRow { row: usize, mass: f64 },

    #[error("matrix is not a valid {kind} kernel: {reason}")]
    InvalidKernel { kind: &'static str, reason: String },

    #[error("index set is not contained in the kernel domain")]
    NotSubset,

    #[error("Id - K on the complement is singular: the complement is not transient")]
    NonRecurrentComplement,

    #[error("{what} did not converge (residual {residual:.3e})")]
    NoConvergence { what: &'static str, residual: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("principal eigenvalue is not simple (|lambda_1| / lambda_0 = {ratio})")]
    PrincipalNotSimple { ratio: f64 },

    #[error("column {column} of the {power}-th power is identically zero")]
    ZeroColumn { column: usize, power: usize },

    #[error("r_hop = {r_hop} is too small: {reason}")]
    HopRadiusTooSmall { r_hop: f64, reason: String },

    #[error("optimal path uses a hop of {hop:.4} > 0.8 * r_hop = {limit:.4}")]
    RHopSaturated { hop: f64, limit: f64 },

    #[error("H({from},{to}) is infinite: the action graph is disconnected")]
    InfiniteH { from: usize, to: usize },

    #[error("theta = {theta} must lie in (0, H0 = {h0})")]
    ThetaTooLarge { theta: f64, h0: f64 },

    #[error("H_theta violates the triangle inequality at ({i},{l},{j}) by {excess:e}")]
    TriangleViolation {
        i: usize,
        l: usize,
        j: usize,
        excess: f64,
    },

    #[error("m = ceil(exp(theta / sigma^2)) is not representable (theta / sigma^2 = {exponent})")]
    Overflow { exponent: f64 },

    #[error("the top-{n} spectral subspace contains an ill-conditioned eigenvalue cluster")]
    DefectiveCluster { n: usize },

    #[error("<QSD_{ball}| Pi0 Pi* vanishes; the (mu, psi) basis is degenerate")]
    BasisDegenerate { ball: usize },

    #[error("Neumann series for [Id - Pi0_perp Pi*]^-1 diverged")]
    NeumannDiverged,

    #[error("reduced matrix entry P[{row}][{col}] = {value:e} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("trajectory ran away: |X| = {norm:e} at step {step}")]
    Runaway { step: u64, norm: f64 },

    #[error("a run exceeded {steps} steps")]
    Timeout { steps: u64 },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Stable identifier used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::SingularCovariance => "SingularCovariance",
            Error::NotInvariant { .. } => "NotInvariant",
            Error::JacobianMismatch { .. } => "JacobianMismatch",
            Error::NoStableFixedPoint => "NoStableFixedPoint",
            Error::MarginalFixedPoint { .. } => "MarginalFixedPoint",
            Error::BallConstructionFailed { .. } => "BallConstructionFailed",
            Error::DriftViolated { .. } => "DriftViolated",
            Error::EmptyBall { .. } => "EmptyBall",
            Error::DegenerateRow { .. } => "DegenerateRow",
            Error::InvalidKernel { .. } => "InvalidKernel",
            Error::NotSubset => "NotSubset",
            Error::NonRecurrentComplement => "NonRecurrentComplement",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::Eigensolver(_) => "Eigensolver",
            Error::PrincipalNotSimple { .. } => "PrincipalNotSimple",
            Error::ZeroColumn { .. } => "ZeroColumn",
            Error::HopRadiusTooSmall { .. } => "HopRadiusTooSmall",
            Error::RHopSaturated { .. } => "RHopSaturated",
            Error::InfiniteH { .. } => "InfiniteH",
            Error::ThetaTooLarge { .. } => "ThetaTooLarge",
            Error::TriangleViolation { .. } => "TriangleViolation",
            Error::Overflow { .. } => "Overflow",
            Error::DefectiveCluster { .. } => "DefectiveCluster",
            Error::BasisDegenerate { .. } => "BasisDegenerate",
            Error::NeumannDiverged => "NeumannDiverged",
            Error::NegativeEntry { .. } => "NegativeEntry",
            Error::Runaway { .. } => "Runaway",
            Error::Timeout { .. } => "Timeout",
            Error::Io(_) => "Io",
            Error::Config(_) => "Config",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
