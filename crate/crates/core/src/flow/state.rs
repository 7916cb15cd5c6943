use serde::Serialize;

use crate::dirac::{SpectralReport, TwistedSpinorField};
use crate::geometry::MapField;

/// Scalar diagnostics of one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub energy_alpha: f64,
    pub dirichlet: f64,
    /// `∫|∂_t u|²` with `∂_t u` the current right-hand side.
    pub dissipation: f64,
    pub gap: Option<f64>,
    pub kernel_dim: Option<usize>,
    pub psi_l2: Option<f64>,
    pub map_residual: f64,
    pub spinor_residual: Option<f64>,
    /// `max_x dist(u(x), N)`.
    pub target_residual: f64,
    /// `max_x |∇u|²`.
    pub max_density: f64,
}

/// A point of the discrete flow.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub step: usize,
    pub alpha: f64,
    pub u: MapField,
    pub psi: Option<TwistedSpinorField>,
    pub report: Option<SpectralReport>,
    pub diagnostics: Diagnostics,
    /// Right-hand side of the map equation at this state.
    pub rhs: MapField,
}

/// A state kept in the trajectory, without the spectral data.
#[derive(Clone, Debug)]
pub struct FlowSample {
    pub t: f64,
    pub step: usize,
    pub u: MapField,
    pub psi: Option<TwistedSpinorField>,
    pub diagnostics: Diagnostics,
}

impl From<&FlowState> for FlowSample {
    fn from(s: &FlowState) -> Self {
        Self {
            t: s.t,
            step: s.step,
            u: s.u.clone(),
            psi: s.psi.clone(),
            diagnostics: s.diagnostics,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Stationary,
    SingularTime,
    Restart,
    BlowupSuspected,
    StepRejected,
    RestartExhausted,
    NumericalFailure,
    TimeLimit,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Stationary => "stationary",
            EventKind::SingularTime => "singular_time",
            EventKind::Restart => "restart",
            EventKind::BlowupSuspected => "blowup_suspected",
            EventKind::StepRejected => "step_rejected",
            EventKind::RestartExhausted => "restart_exhausted",
            EventKind::NumericalFailure => "numerical_failure",
            EventKind::TimeLimit => "time_limit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowEvent {
    pub kind: EventKind,
    pub time: f64,
    pub step: usize,
    pub energy_before: Option<f64>,
    pub energy_after: Option<f64>,
    pub kernel_dim: Option<usize>,
    pub gap: Option<f64>,
    pub detail: String,
}

impl FlowEvent {
    pub(crate) fn new(kind: EventKind, time: f64, step: usize) -> Self {
        Self {
            kind,
            time,
            step,
            energy_before: None,
            energy_after: None,
            kernel_dim: None,
            gap: None,
            detail: String::new(),
        }
    }

    pub(crate) fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// One accepted step of the energy identity
/// `E^α(t_k) − E^α(t_0) + α Σ dt_j W_j ≈ 0` within a restart-free segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    /// `W_j = ∫(1+|∇u_j|²)^{α−1} |(u_{j+1} − u_j)/dt|²`.
    pub weighted_dissipation: f64,
    /// `E^α(t_k) − E^α(t_0) + α Σ dt W`.
    pub residual: f64,
    /// The same with the factor `2α`.
    pub residual_2alpha: f64,
    pub segment: usize,
}

/// One line of the time-series output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub energy_alpha: f64,
    pub dirichlet: f64,
    pub dissipation: f64,
    pub gap: Option<f64>,
    pub kernel_dim: Option<usize>,
    pub psi_l2: Option<f64>,
    pub map_residual: f64,
    pub spinor_residual: Option<f64>,
    pub event: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Stationary,
    TimeLimit,
    RestartExhausted,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<FlowSample>,
    pub events: Vec<FlowEvent>,
    pub ledger: Vec<LedgerEntry>,
    pub rows: Vec<SeriesRow>,
    pub outcome: Outcome,
    pub final_state: FlowState,
}

impl Trajectory {
    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &FlowEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Largest `E^α` increase between consecutive accepted states.
    pub fn max_energy_increase(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for w in self.rows.windows(2) {
            worst = worst.max(w[1].energy_alpha - w[0].energy_alpha);
        }
        worst
    }
}
