use thiserror::Error;

/// Which pair of types breaks partial inclusion and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionFailure {
    /// The other type buys nothing at this type's monopoly price.
    FullExclusion,
    /// This type's monopoly price lies below the other type's support, so
    /// every consumer of the other type is served.
    FullInclusion,
}

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid demand parameters: {0}")]
    InvalidParameters(String),
    #[error("price {price} lies outside the support [{lo}, {hi}]")]
    OutOfSupport { price: f64, lo: f64, hi: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),
    #[error("no interior monopoly price: {0}")]
    NoInteriorRoot(String),
    #[error("family must contain at least one type")]
    EmptyFamily,
    #[error("partial inclusion fails between types {i} and {j} ({kind:?})")]
    PartialInclusionViolated { i: usize, j: usize, kind: InclusionFailure },
    #[error("market is not a distribution over the family: {0}")]
    InvalidMarket(String),
    #[error("root finder did not converge: {0}")]
    RootNotFound(String),
    #[error("expected revenue curvature {0:e} is too close to zero")]
    DegenerateCurvature(f64),
    #[error("welfare weight {0} lies outside (0, 1]")]
    InvalidWeight(f64),
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("split of atom {atom} with step {step} leaves the simplex")]
    SimplexViolation { atom: usize, step: f64 },
    #[error("contraction factor {0} lies outside (0, 1]")]
    InvalidEpsilon(f64),
    #[error("finer segmentation is not a recorded refinement of the coarser one")]
    NotARefinement,
    #[error("the two segmentations carry the same information")]
    ZeroInformationGap,
    #[error("marginal revenue signs do not bracket the price: {0}")]
    SignConditionViolated(String),
    #[error("operation requires exactly two types, got {0}")]
    NotBinary(usize),
    #[error("family is not of the affine-of-base form: {0}")]
    NotAffineFamily(String),
    #[error("verdicts are not ordered in the welfare weight: {0}")]
    CorollaryViolation(String),
    #[error("the reduced value Hessian vanishes; no extremal direction")]
    UndefinedDirection,
    #[error("operation needs three types, got {0}")]
    WrongDimension(usize),
    #[error("finite-difference stencil of half-width {h} leaves the simplex")]
    BoundaryTooClose { h: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
