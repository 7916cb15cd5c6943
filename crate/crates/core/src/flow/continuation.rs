use serde::Serialize;

use super::config::FlowConfig;
use super::integrator::Flow;
use super::state::{Outcome, Trajectory};
use super::terms::dirichlet_energy;
use super::FlowError;
use crate::analysis::{concentration_monitor, default_radii, ConcentrationReport};
use crate::dirac::TwistedSpinorField;
use crate::geometry::{Geometry, MapField};

/// Summary of one α stage.
#[derive(Clone, Debug, Serialize)]
pub struct StageSummary {
    pub alpha: f64,
    pub outcome: Outcome,
    pub steps: usize,
    pub final_time: f64,
    pub energy_alpha: f64,
    pub dirichlet: f64,
    pub psi_l2: Option<f64>,
    pub concentration: ConcentrationReport,
}

#[derive(Clone, Debug)]
pub struct ContinuationResult {
    pub stages: Vec<StageSummary>,
    pub trajectories: Vec<Trajectory>,
    /// Nodes concentrating in every state of the second half of the schedule.
    pub blowup: Option<ConcentrationReport>,
}

/// Checks that the schedule is strictly decreasing with entries above 1,
/// allowing a final entry equal to 1.
pub fn validate_schedule(schedule: &[f64]) -> Result<(), FlowError> {
    if schedule.is_empty() {
        return Err(FlowError::InvalidConfig("alpha schedule is empty".into()));
    }
    for (i, &a) in schedule.iter().enumerate() {
        let last = i + 1 == schedule.len();
        if !a.is_finite() || a < 1.0 || (a == 1.0 && !last) {
            return Err(FlowError::InvalidConfig(format!(
                "alpha schedule entry {a} must exceed 1 (only the last entry may equal 1)"
            )));
        }
        if i > 0 && a >= schedule[i - 1] {
            return Err(FlowError::InvalidConfig(
                "alpha schedule must be strictly decreasing".into(),
            ));
        }
    }
    Ok(())
}

/// Runs the flow for each `α_k` of the schedule, each stage starting from
/// the previous endpoint when `config.warm_start` is set and from `(u₀, ψ₀)`
/// otherwise. The concentration threshold defaults to `0.1 · E(u₀)`.
pub fn alpha_continuation(
    geometry: &Geometry,
    config: &FlowConfig,
    schedule: &[f64],
    u0: &MapField,
    psi0: Option<&TwistedSpinorField>,
    threshold: Option<f64>,
) -> Result<ContinuationResult, FlowError> {
    validate_schedule(schedule)?;
    let radii = default_radii(geometry);
    let threshold = match threshold {
        Some(t) => t,
        None => 0.1 * dirichlet_energy(geometry, &u0.project(&geometry.target)?),
    };
    let mut result = ContinuationResult {
        stages: Vec::new(),
        trajectories: Vec::new(),
        blowup: None,
    };
    let mut start: (MapField, Option<TwistedSpinorField>) = (u0.clone(), psi0.cloned());
    for (k, &alpha) in schedule.iter().enumerate() {
        let mut cfg = config.clone();
        cfg.alpha = alpha;
        let abort = |result: ContinuationResult, reason: String| FlowError::ContinuationAborted {
            stage: k,
            reason,
            partial: Box::new(result),
        };
        let mut flow = match Flow::new(geometry.clone(), cfg) {
            Ok(f) => f,
            Err(e) => return Err(abort(result, e.to_string())),
        };
        let state = match flow.initial_state(&start.0, start.1.as_ref()) {
            Ok(s) => s,
            Err(e) => return Err(abort(result, e.to_string())),
        };
        let trajectory = flow.run(state, &mut |_, _| {});
        let fin = &trajectory.final_state;
        let concentration = match concentration_monitor(geometry, &[&fin.u], &radii, threshold) {
            Ok(c) => c,
            Err(e) => return Err(abort(result, e.to_string())),
        };
        result.stages.push(StageSummary {
            alpha,
            outcome: trajectory.outcome,
            steps: fin.step,
            final_time: fin.t,
            energy_alpha: fin.diagnostics.energy_alpha,
            dirichlet: fin.diagnostics.dirichlet,
            psi_l2: fin.diagnostics.psi_l2,
            concentration,
        });
        let failed = matches!(
            trajectory.outcome,
            Outcome::RestartExhausted | Outcome::NumericalFailure
        );
        if config.warm_start {
            start = (fin.u.clone(), fin.psi.clone());
        }
        result.trajectories.push(trajectory);
        if failed {
            let reason = format!("stage {k} (alpha = {alpha}) ended without a regular endpoint");
            return Err(abort(result, reason));
        }
    }
    let tail_start = result.trajectories.len() / 2;
    let tail: Vec<&MapField> = result.trajectories[tail_start..]
        .iter()
        .map(|t| &t.final_state.u)
        .collect();
    result.blowup = Some(
        concentration_monitor(geometry, &tail, &radii, threshold).map_err(FlowError::Analysis)?,
    );
    Ok(result)
}
