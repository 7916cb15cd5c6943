//! Drivers of the four subcommands.

use std::path::Path;

use serde::Serialize;

use super::config::{RunConfig, Start};
use super::output::{
    create_dir, prepare_output, series_csv, write_checkpoint, write_json, OUTPUT_FORMAT,
};
use super::validate::run_validation;
use super::CliError;
use crate::dirac::{assemble_operator, compute_spectrum_with, SpectrumOptions};
use crate::flow::{
    alpha_continuation, ContinuationResult, Diagnostics, Flow, FlowError, FlowEvent, LedgerEntry,
    Outcome, Trajectory,
};
use crate::geometry::Geometry;

/// Exit code for a run that ended with the given outcome.
pub fn outcome_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Stationary | Outcome::TimeLimit => 0,
        Outcome::RestartExhausted => 3,
        Outcome::NumericalFailure => 4,
    }
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

pub fn cmd_spectrum(config: &RunConfig, quiet: bool) -> Result<i32, CliError> {
    let geometry = config.geometry()?;
    let u = match config.initial_data(&geometry)? {
        Start::Map(u) => u,
        Start::Checkpoint(c) => c.u,
    };
    let dir = prepare_output(config, "spectrum")?;
    let op = assemble_operator(&geometry, &u)?;
    let mut opts = SpectrumOptions::new(&geometry, config.spectrum.count);
    if let Some(t) = config.spectrum.kernel_tol {
        opts.kernel_tol = t;
    }
    opts.method = config.spectrum.method;
    opts.seed = config.seed();
    let report = compute_spectrum_with(&op, &opts)?;
    let mut json = report.to_json();
    json["dimension"] = op.dim().into();
    json["off_tangent_mass"] = op.mass().into();
    json["hermiticity_residual"] = op.hermiticity_residual().into();
    write_json(&dir.join("spectrum.json"), &json)?;
    if config.spectrum.eigenvectors {
        let path = dir.join("eigenvectors.bin");
        report
            .write_eigenvectors(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    say(
        quiet,
        format!(
            "kernel_dim = {}, gap = {}, {} eigenvalues written to {}",
            report.kernel_dim,
            report.gap.map_or("none".into(), |g| format!("{g:.10e}")),
            report.eigenvalues.len(),
            dir.display()
        ),
    );
    Ok(0)
}

#[derive(Serialize)]
struct RunReport<'a> {
    format: &'static str,
    alpha: f64,
    outcome: Outcome,
    final_time: f64,
    final_step: usize,
    final_diagnostics: &'a Diagnostics,
    events: &'a [FlowEvent],
    ledger_tail: Option<&'a LedgerEntry>,
}

fn write_trajectory(dir: &Path, traj: &Trajectory, stride: usize) -> Result<(), CliError> {
    super::output::write_text(&dir.join("series.csv"), &series_csv(&traj.rows, stride))?;
    let fin = &traj.final_state;
    let report = RunReport {
        format: OUTPUT_FORMAT,
        alpha: fin.alpha,
        outcome: traj.outcome,
        final_time: fin.t,
        final_step: fin.step,
        final_diagnostics: &fin.diagnostics,
        events: &traj.events,
        ledger_tail: traj.ledger.last(),
    };
    write_json(&dir.join("events.json"), &report)
}

/// Runs the flow, writing checkpoints every `checkpoint_stride` steps.
fn run_with_checkpoints(
    config: &RunConfig,
    geometry: &Geometry,
    dir: &Path,
) -> Result<Trajectory, CliError> {
    let mut flow = Flow::new(geometry.clone(), config.flow.clone())?;
    let state = match config.initial_data(geometry)? {
        Start::Map(u) => flow.initial_state(&u, None)?,
        Start::Checkpoint(c) => {
            flow.set_reference_energy(c.header.reference_energy);
            flow.resume_state(c.header.t, c.header.step, c.u, c.psi.as_ref())?
        }
    };
    let reference = flow.reference_energy().unwrap_or(0.0);
    let hash = config.config_hash();
    let stride = config.output.checkpoint_stride;
    let ckpt_dir = dir.join("checkpoints");
    if stride > 0 {
        create_dir(&ckpt_dir)?;
    }
    let mut failure: Option<CliError> = None;
    let traj = flow.run(state, &mut |s, _| {
        if stride > 0 && s.step % stride == 0 && failure.is_none() {
            let path = ckpt_dir.join(format!("step_{:08}.ckpt", s.step));
            if let Err(e) = write_checkpoint(&path, s, geometry, &hash, reference) {
                failure = Some(e);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    write_checkpoint(
        &dir.join("final.ckpt"),
        &traj.final_state,
        geometry,
        &hash,
        reference,
    )?;
    Ok(traj)
}

pub fn cmd_flow(config: &RunConfig, quiet: bool) -> Result<i32, CliError> {
    let geometry = config.geometry()?;
    let dir = prepare_output(config, "flow")?;
    let traj = run_with_checkpoints(config, &geometry, &dir)?;
    write_trajectory(&dir, &traj, config.output.sample_stride)?;
    let fin = &traj.final_state;
    say(
        quiet,
        format!(
            "{:?} at t = {} after {} steps, E_alpha = {:.12e}, outputs in {}",
            traj.outcome,
            fin.t,
            fin.step,
            fin.diagnostics.energy_alpha,
            dir.display()
        ),
    );
    Ok(outcome_code(traj.outcome))
}

#[derive(Serialize)]
struct ContinuationReport<'a> {
    format: &'static str,
    schedule: &'a [f64],
    completed: bool,
    aborted: Option<String>,
    stages: &'a [crate::flow::StageSummary],
    blowup: Option<&'a crate::analysis::ConcentrationReport>,
}

pub fn cmd_continue(config: &RunConfig, quiet: bool) -> Result<i32, CliError> {
    let schedule = &config.continuation.schedule;
    if schedule.is_empty() {
        return Err(CliError::Config {
            message: "continuation.schedule: must list at least one alpha".into(),
            line: None,
            column: None,
        });
    }
    let geometry = config.geometry()?;
    let (u0, psi0) = match config.initial_data(&geometry)? {
        Start::Map(u) => (u, None),
        Start::Checkpoint(c) => (c.u, c.psi),
    };
    let dir = prepare_output(config, "continue")?;
    let outcome = alpha_continuation(
        &geometry,
        &config.flow,
        schedule,
        &u0,
        psi0.as_ref(),
        config.continuation.threshold,
    );
    let (result, aborted): (ContinuationResult, Option<String>) = match outcome {
        Ok(r) => (r, None),
        Err(FlowError::ContinuationAborted {
            stage,
            reason,
            partial,
        }) => (*partial, Some(format!("stage {stage}: {reason}"))),
        Err(e) => return Err(e.into()),
    };
    for (k, traj) in result.trajectories.iter().enumerate() {
        let stage_dir = dir.join(format!("stage_{k:02}"));
        create_dir(&stage_dir)?;
        write_trajectory(&stage_dir, traj, config.output.sample_stride)?;
    }
    let report = ContinuationReport {
        format: OUTPUT_FORMAT,
        schedule,
        completed: aborted.is_none(),
        aborted: aborted.clone(),
        stages: &result.stages,
        blowup: result.blowup.as_ref(),
    };
    write_json(&dir.join("continuation.json"), &report)?;
    for s in &result.stages {
        say(
            quiet,
            format!(
                "alpha = {}: {:?} after {} steps, E = {:.10e}, flagged nodes = {}",
                s.alpha,
                s.outcome,
                s.steps,
                s.dirichlet,
                s.concentration.flagged.len()
            ),
        );
    }
    match aborted {
        None => {
            let flagged = result.blowup.as_ref().map_or(0, |b| b.flagged.len());
            say(quiet, format!("completed; {flagged} concentration points"));
            Ok(0)
        }
        Some(reason) => {
            say(quiet, format!("aborted at {reason}"));
            let last = result.trajectories.last().map(|t| t.outcome);
            Ok(last.map_or(4, outcome_code).max(1))
        }
    }
}

pub fn cmd_validate(config: &RunConfig, quiet: bool) -> Result<i32, CliError> {
    let dir = prepare_output(config, "validate")?;
    let report = run_validation(config)?;
    write_json(&dir.join("validation.json"), &report)?;
    if !quiet {
        for c in &report.checks {
            let status = match c.status {
                super::validate::Status::Pass => "PASS",
                super::validate::Status::Fail => "FAIL",
                super::validate::Status::Skip => "SKIP",
            };
            match (c.measured, c.allowed) {
                (Some(m), Some(a)) => {
                    println!("{status} {:<24} {m:.6e} {} {a:.6e}", c.name, c.relation)
                }
                _ => println!("{status} {:<24} {}", c.name, c.detail),
            }
        }
    }
    Ok(if report.passed { 0 } else { 1 })
}
