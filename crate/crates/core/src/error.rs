use std::fmt;

use thiserror::Error;

use crate::identification::TheilWitness;

pub type Result<T> = std::result::Result<T, Error>;

/// Named structural conditions that an estimator or diagnostic may require.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// rk(R) = rk(R, r)
    RestrictionConsistency,
    /// (R; X) has full column rank
    JointIdentification,
    /// F'X has full column rank (true inverse of X'Ω⁺X exists)
    PositiveSpaceRank,
    /// rk(H) = rk(H, h) for explicit and implicit restrictions together
    CombinedConsistency,
    /// N'C₊N invertible, equivalently (H; C₊) has full column rank
    ReducedNormalMatrix,
    /// X has full column rank
    DesignRank,
    /// Ω positive definite
    DispersionRegular,
}

impl Condition {
    /// Stable label used in reports and error messages.
    pub fn label(self) -> &'static str {
        match self {
            Condition::RestrictionConsistency => "restriction-consistency rk(R) = rk(R, r)",
            Condition::JointIdentification => "joint identification: (R; X) full column rank",
            Condition::PositiveSpaceRank => "Theil rank condition: F'X full column rank",
            Condition::CombinedConsistency => "combined consistency rk(H) = rk(H, h)",
            Condition::ReducedNormalMatrix => "reduced normal matrix N'C+N invertible",
            Condition::DesignRank => "design rank: X full column rank",
            Condition::DispersionRegular => "dispersion positive definite",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Condition::RestrictionConsistency => "restriction-consistency",
            Condition::JointIdentification => "joint-identification",
            Condition::PositiveSpaceRank => "positive-space-rank",
            Condition::CombinedConsistency => "combined-consistency",
            Condition::ReducedNormalMatrix => "reduced-normal-matrix",
            Condition::DesignRank => "design-rank",
            Condition::DispersionRegular => "dispersion-regular",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Coarse error classes, used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or non-conforming input data.
    Input,
    /// A structural precondition (rank, consistency, definiteness) does not hold.
    Precondition,
    /// A factorization failed although its preconditions were checked.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("matrix is indefinite: eigenvalue {eigenvalue:.6e} below -{tolerance:.3e}")]
    IndefiniteInput { eigenvalue: f64, tolerance: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dispersion matrix is not symmetric nonnegative definite: {0}")]
    DispersionNotNnd(String),
    #[error("dispersion matrix is not positive definite: {0}")]
    DispersionNotPd(String),
    #[error("response lies outside the column space of (X : Omega): residual {residual:.3e} exceeds {bound:.3e}")]
    ResponseOutsideRange { residual: f64, bound: f64 },
    #[error("need more observations than regressors, got T = {t}, K = {k}")]
    TooFewObservations { t: usize, k: usize },
    #[error("inconsistent restrictions: rank {rank} but augmented rank {augmented_rank}")]
    InconsistentRestrictions { rank: usize, augmented_rank: usize },
    #[error("identification failure ({condition}): rank {rank}, required {required}")]
    IdentificationFailure { condition: Condition, rank: usize, required: usize },
    #[error("design matrix is rank deficient: rank {rank} < K = {k}")]
    DesignRankDeficient { rank: usize, k: usize },
    #[error("dispersion matrix is singular: rank {rank} < T = {t}")]
    DispersionSingular { rank: usize, t: usize },
    #[error("X'X + Psi is numerically singular")]
    ShiftInsufficient,
    #[error("Theil rank condition violated: rank(F'X) = {rank} < K = {k}")]
    TheilConditionViolated { rank: usize, k: usize, witness: Option<Box<TheilWitness>> },
    #[error("restriction Gram matrix R C+^-1 R' is singular: rank {rank} < q = {q}")]
    RestrictionGramSingular { rank: usize, q: usize },
    #[error("reduced normal matrix N'C+N is singular: rank {rank} < {order}")]
    SMatrixSingular { rank: usize, order: usize },
    #[error("particular point violates H b = h by {residual:.3e}")]
    InfeasibleParticular { residual: f64 },
    #[error("period {period}: Sigma_t a has norm {residual:.3e}, vector a is not a common null vector")]
    NullVectorMismatch { period: usize, residual: f64 },
    #[error("period {period}: Sigma_t has {null_dim} zero roots, exactly one is supported")]
    UnsupportedNullStructure { period: usize, null_dim: usize },
    #[error("period {period} out of range 1..={m}")]
    PeriodOutOfRange { period: usize, m: usize },
    #[error("reduced dispersion after dropping period {period} is singular")]
    ReducedDispersionSingular { period: usize },
    #[error("dense projectors requested for T = {t} above the cap {cap}")]
    ProjectorTooLarge { t: usize, cap: usize },
    #[error("{0} did not converge")]
    NoConvergence(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("replication {index}: {source}")]
    Replication { index: usize, source: Box<Error> },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            NonFinite | DimensionMismatch(_) | PeriodOutOfRange { .. } | InvalidConfig(_) => {
                ErrorKind::Input
            }
            ShiftInsufficient
            | RestrictionGramSingular { .. }
            | ReducedDispersionSingular { .. }
            | ProjectorTooLarge { .. }
            | NoConvergence(_) => ErrorKind::Numerical,
            Replication { source, .. } => source.kind(),
            _ => ErrorKind::Precondition,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            NonFinite => "non-finite",
            NonSymmetric { .. } => "non-symmetric",
            IndefiniteInput { .. } => "indefinite-input",
            DimensionMismatch(_) => "dimension-mismatch",
            DispersionNotNnd(_) => "dispersion-not-nnd",
            DispersionNotPd(_) => "dispersion-not-pd",
            ResponseOutsideRange { .. } => "response-outside-range",
            TooFewObservations { .. } => "too-few-observations",
            InconsistentRestrictions { .. } => "inconsistent-restrictions",
            IdentificationFailure { .. } => "identification-failure",
            DesignRankDeficient { .. } => "design-rank-deficient",
            DispersionSingular { .. } => "dispersion-singular",
            ShiftInsufficient => "shift-insufficient",
            TheilConditionViolated { .. } => "theil-condition-violated",
            RestrictionGramSingular { .. } => "restriction-gram-singular",
            SMatrixSingular { .. } => "s-matrix-singular",
            InfeasibleParticular { .. } => "infeasible-particular",
            NullVectorMismatch { .. } => "null-vector-mismatch",
            UnsupportedNullStructure { .. } => "unsupported-null-structure",
            PeriodOutOfRange { .. } => "period-out-of-range",
            ReducedDispersionSingular { .. } => "reduced-dispersion-singular",
            ProjectorTooLarge { .. } => "projector-too-large",
            NoConvergence(_) => "no-convergence",
            InvalidConfig(_) => "invalid-config",
            Replication { source, .. } => source.code(),
        }
    }

    /// The structural condition this error reports as violated, if any.
    pub fn condition(&self) -> Option<Condition> {
        use Error::*;
        match self {
            InconsistentRestrictions { .. } => Some(Condition::RestrictionConsistency),
            IdentificationFailure { condition, .. } => Some(*condition),
            DesignRankDeficient { .. } => Some(Condition::DesignRank),
            DispersionSingular { .. } | DispersionNotPd(_) => Some(Condition::DispersionRegular),
            TheilConditionViolated { .. } => Some(Condition::PositiveSpaceRank),
            SMatrixSingular { .. } => Some(Condition::ReducedNormalMatrix),
            Replication { source, .. } => source.condition(),
            _ => None,
        }
    }

    pub fn witness(&self) -> Option<&TheilWitness> {
        match self {
            Error::TheilConditionViolated { witness, .. } => witness.as_deref(),
            Error::Replication { source, .. } => source.witness(),
            _ => None,
        }
    }
}
