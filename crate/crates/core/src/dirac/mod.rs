//! Spinor fields, Clifford multiplication, the Dirac operator along a map,
//! its near-zero spectrum and the kernel-constraint solver `ψ(u)`.

mod clifford;
mod constraint;
mod eigen;
mod operator;
mod spectrum;
mod spinor;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use clifford::{clifford_mul, clifford_vec};
pub use constraint::{
    holonomy_check, operator_lipschitz_check, project_to_kernel, solve_constraint,
    transport_spinor, ConstraintSolution, DEFAULT_PROJECTION_TOL,
};
pub use operator::{
    assemble_operator, assemble_operator_with, dirac_along_map, free_dirac, free_spectral_radius,
    Assembly, DiracOperator, DENSE_LIMIT, OFF_TANGENT_MASS_FACTOR,
};
pub use spectrum::{
    compute_spectrum, compute_spectrum_with, default_kernel_tol, free_spectrum, EigenMethod,
    SpectralReport, SpectrumOptions, SPECTRUM_FORMAT,
};
pub use spinor::{SpinorField, TwistedSpinorField};

pub(crate) use operator::free_dirac_raw;
pub(crate) use spinor::{weighted_inner, weighted_norm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiracError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("spinor is not tangent along the map (residual {residual:.3e} > {tol:.3e})")]
    TangencyViolation { residual: f64, tol: f64 },
    #[error("kernel of the twisted operator is not minimal (complex dimension {dim})")]
    KernelNotMinimal { dim: usize },
    #[error("spectral gap {gap:.3e} does not separate the kernel (threshold {threshold:.3e})")]
    GapCollapsed { gap: f64, threshold: f64 },
    #[error("kernel projection norm {norm:.3e} fell below {tol:.3e}")]
    ProjectionDegenerate { norm: f64, tol: f64 },
    #[error("eigensolver failure: {0}")]
    EigensolveFailure(String),
}
