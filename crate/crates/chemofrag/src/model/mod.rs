//! Model ingredients: fragmentation kernels, coefficient families, the
//! primal and dual fragmentation operators, and assumption validation.

mod coefficients;
mod fragmentation;
mod kernel;
mod validate;

pub use coefficients::{
    monod, CoefficientBounds, CoefficientFamily, CoefficientSet, Coefficients, DerivativeBounds,
    DiffForm, HolderInR, Shape,
};
pub use fragmentation::{fragment_dual, fragment_primal};
pub use kernel::{FragmentationKernel, KernelVariant};
pub use validate::{validate_coefficients, ReportEntry, Severity, ValidationReport};

use core::fmt;

/// Errors raised while constructing model ingredients.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    /// A scalar parameter is outside its admissible range (or not finite).
    ParamOutOfRange { name: &'static str, value: f64 },
    /// Quadrature node count for a continuous kernel is outside `1..=64`.
    QuadSizeOutOfRange { n_quad: usize },
    /// A discrete kernel atom has no mirror partner at `1 - alpha`.
    AsymmetricAtoms { alpha: f64 },
    /// A discrete kernel was given no atoms.
    EmptyKernel,
    /// Kernel weights do not sum to a positive finite value.
    NonNormalizableWeights { total: f64 },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::ParamOutOfRange { name, value } => {
                write!(f, "parameter {name} = {value} is outside its admissible range")
            }
            ModelError::QuadSizeOutOfRange { n_quad } => {
                write!(f, "kernel quadrature size {n_quad} is outside 1..=64")
            }
            ModelError::AsymmetricAtoms { alpha } => {
                write!(f, "kernel atom at alpha = {alpha} has no mirror partner at 1 - alpha")
            }
            ModelError::EmptyKernel => write!(f, "discrete kernel needs at least one atom"),
            ModelError::NonNormalizableWeights { total } => {
                write!(f, "kernel weights sum to {total}, cannot normalize")
            }
        }
    }
}
