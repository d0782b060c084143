//! Least-squares estimation in the general Gauss-Markoff model
//! `{y, Xβ, σ²Ω}` where `Ω` may be singular, `X` may be collinear and
//! `β` may be subject to exact linear restrictions.

pub mod error;
pub mod estimators;
pub mod fe_panel;
pub mod identification;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod spectral;

pub use error::{Condition, Error, ErrorKind, Result};
pub use model::{
    build_model, stack_sur, ConditionCheck, DispersionBlocks, EstimateResult, EstimatorTag, GaussMarkoffModel,
    LinearRestrictions, ModelOptions, StackOrder, SurLayout,
};
pub use spectral::{Matrix, SpectralDecomposition, Tolerance, Vector};
