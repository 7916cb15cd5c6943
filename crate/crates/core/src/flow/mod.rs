//! The coupled heat flow: the map equation in ambient form, IMEX stepping
//! with nodewise projection, the kernel constraint along the flow, energy
//! bookkeeping, singular times with restarts, and α-continuation.

mod config;
mod continuation;
mod integrator;
mod state;
mod terms;

use thiserror::Error;

pub use config::{FlowConfig, RestartPolicy, SpinorMode};
pub use continuation::{alpha_continuation, validate_schedule, ContinuationResult, StageSummary};
pub use integrator::{run_flow, Flow, Restarted, StepResult};
pub use state::{
    Diagnostics, EventKind, FlowEvent, FlowSample, FlowState, LedgerEntry, Outcome, SeriesRow,
    Trajectory,
};
pub use terms::{
    action, curvature_pairing_check, dirichlet_energy, el_residual, energy_alpha, f1_term, f2_term,
    map_rhs, variational_consistency_check, VariationCheck,
};

use crate::analysis::AnalysisError;
use crate::dirac::DiracError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dirac(#[from] DiracError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("no admissible restart candidate after {attempts} attempts")]
    RestartExhausted { attempts: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("continuation aborted at stage {stage}: {reason}")]
    ContinuationAborted {
        stage: usize,
        reason: String,
        partial: Box<ContinuationResult>,
    },
}
