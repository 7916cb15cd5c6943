use faer::Mat;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{FlowConfig, Resolved, SpinorMode};
use super::state::{
    Diagnostics, EventKind, FlowEvent, FlowSample, FlowState, LedgerEntry, Outcome, SeriesRow,
    Trajectory,
};
use super::terms::{energy_alpha, map_rhs, weight, weighted_field_norm, weighted_square};
use super::FlowError;
use crate::analysis::homotopy_invariants;
use crate::dirac::{
    assemble_operator_with, compute_spectrum_with, project_to_kernel, transport_spinor,
    weighted_norm, Assembly, ConstraintSolution, DiracError, DiracOperator, EigenMethod,
    SpectralReport, SpectrumOptions, TwistedSpinorField, DEFAULT_PROJECTION_TOL,
};
use crate::geometry::{smooth_random_field, Geometry, MapField};

type C = Complex64;

/// Result of one attempted step.
#[derive(Clone, Debug)]
pub enum StepResult {
    Accepted {
        state: FlowState,
        dt: f64,
        weighted_dissipation: f64,
        /// Step sizes whose energy increase exceeded the tolerance.
        rejected: Vec<f64>,
    },
    /// The new map has a non-minimal or non-isolated kernel. The returned
    /// state carries the new map and its spectrum but no spinor.
    Singular {
        state: FlowState,
        dt: f64,
        rejected: Vec<f64>,
        reason: String,
    },
}

/// A successful restart.
#[derive(Clone, Debug)]
pub struct Restarted {
    pub state: FlowState,
    pub attempts: usize,
    pub amplitude: f64,
}

/// Flow driver: geometry, configuration and resolved thresholds.
#[derive(Clone, Debug)]
pub struct Flow {
    pub geometry: Geometry,
    pub config: FlowConfig,
    resolved: Resolved,
    energy_tol: Option<f64>,
}

impl Flow {
    pub fn new(geometry: Geometry, config: FlowConfig) -> Result<Self, FlowError> {
        config.validate()?;
        let resolved = config.resolve(&geometry);
        Ok(Self {
            geometry,
            config,
            resolved,
            energy_tol: None,
        })
    }

    /// Fixes `E^α(u₀)`, the scale of the per-step energy tolerance. Set
    /// automatically by [`Flow::initial_state`]; resumed runs restore it.
    pub fn set_reference_energy(&mut self, energy: f64) {
        self.energy_tol = Some(self.config.energy_tol_rel * energy);
    }

    pub fn reference_energy(&self) -> Option<f64> {
        self.energy_tol.map(|t| t / self.config.energy_tol_rel)
    }

    pub fn stationary_tol(&self) -> f64 {
        self.resolved.stationary_tol
    }

    pub fn kernel_tol(&self) -> f64 {
        self.resolved.kernel_tol
    }

    /// Gap below which the kernel counts as no longer isolated.
    pub fn gap_threshold(&self) -> f64 {
        self.resolved.gap_threshold
    }

    pub fn ball_radius(&self) -> f64 {
        self.resolved.ball_radius
    }

    fn coupled(&self) -> bool {
        self.config.spinor == SpinorMode::Coupled
    }

    /// Assembles `D̸^{π∘u}` and computes its spectrum near zero.
    pub fn spectrum_at(
        &self,
        u: &MapField,
        warm: Option<&Mat<C>>,
    ) -> Result<(DiracOperator, SpectralReport), FlowError> {
        let dim = 2 * self.geometry.nodes() * self.geometry.q();
        let assembly = if dim <= self.config.dense_limit {
            Assembly::Dense
        } else {
            Assembly::MatrixFree
        };
        let op = assemble_operator_with(&self.geometry, u, assembly)?;
        let mut opts = SpectrumOptions::new(&self.geometry, self.config.spectrum_count);
        opts.kernel_tol = self.resolved.kernel_tol;
        opts.method = self.config.eigen_method;
        opts.seed = self.config.seed;
        if self.config.eigen_method != EigenMethod::Dense {
            opts.warm_start = warm.cloned();
        }
        let report = compute_spectrum_with(&op, &opts)?;
        Ok((op, report))
    }

    /// Whether a spectrum allows the constraint to be solved continuously.
    pub fn admissible(&self, report: &SpectralReport) -> bool {
        report.is_minimal() && report.gap.is_some_and(|g| g >= self.resolved.gap_threshold)
    }

    fn singular_reason(&self, report: &SpectralReport) -> String {
        format!(
            "kernel dimension {} with gap {:.3e} (threshold {:.3e})",
            report.kernel_dim,
            report.gap.unwrap_or(0.0),
            self.resolved.gap_threshold
        )
    }

    /// Builds a state with all diagnostics. `solution` carries the spinor, its
    /// spectrum and `‖D̸ψ‖`.
    fn build_state(
        &self,
        t: f64,
        step: usize,
        u: MapField,
        solution: Option<(TwistedSpinorField, SpectralReport, f64)>,
        report_only: Option<SpectralReport>,
    ) -> Result<FlowState, FlowError> {
        let g = &self.geometry;
        let alpha = self.config.alpha;
        let (psi, report, spinor_residual) = match solution {
            Some((psi, report, res)) => (Some(psi), Some(report), Some(res)),
            None => (None, report_only, None),
        };
        let rhs = map_rhs(g, &u, psi.as_ref(), alpha)?;
        let density = g.gradient_density(&u);
        let w: Vec<f64> = density
            .iter()
            .map(|d| (1.0 + d).powf(alpha - 1.0))
            .collect();
        let h = g.cell_area();
        let diagnostics = Diagnostics {
            energy_alpha: 0.5 * h * density.iter().map(|d| (1.0 + d).powf(alpha)).sum::<f64>(),
            dirichlet: 0.5 * h * density.iter().sum::<f64>(),
            dissipation: weighted_square(g, None, &rhs),
            gap: report.as_ref().and_then(|r| r.gap),
            kernel_dim: report.as_ref().map(|r| r.kernel_dim),
            psi_l2: psi.as_ref().map(|p| p.l2_norm(h)),
            map_residual: weighted_field_norm(g, &w, &rhs),
            spinor_residual,
            target_residual: u.target_residual(&g.target),
            max_density: density.iter().cloned().fold(0.0, f64::max),
        };
        Ok(FlowState {
            t,
            step,
            alpha,
            u,
            psi,
            report,
            diagnostics,
            rhs,
        })
    }

    /// The state at `u₀`. With the spinor coupled, `ψ₀` (or a seeded smooth
    /// spinor when absent) is projected onto the kernel; a non-admissible
    /// kernel yields a state without spinor, which [`Flow::run`] treats as a
    /// singular time.
    pub fn initial_state(
        &mut self,
        u0: &MapField,
        psi0: Option<&TwistedSpinorField>,
    ) -> Result<FlowState, FlowError> {
        let u = u0.project(&self.geometry.target)?;
        if self.energy_tol.is_none() {
            self.set_reference_energy(energy_alpha(&self.geometry, &u, self.config.alpha));
        }
        self.state_at(0.0, 0, u, psi0)
    }

    /// A state at `(t, step)` for a map already on the target.
    pub fn state_at(
        &self,
        t: f64,
        step: usize,
        u: MapField,
        psi: Option<&TwistedSpinorField>,
    ) -> Result<FlowState, FlowError> {
        if !self.coupled() {
            return self.build_state(t, step, u, None, None);
        }
        let (op, report) = self.spectrum_at(&u, None)?;
        if !self.admissible(&report) {
            return self.build_state(t, step, u, None, Some(report));
        }
        let sol = match psi {
            Some(p) => project_to_kernel(&op, &report, p, None, DEFAULT_PROJECTION_TOL)?,
            None => self.default_spinor(&op, &report, &u)?,
        };
        self.build_state(t, step, u, Some((sol.psi, sol.report, sol.residual)), None)
    }

    /// Kernel projection of a smooth spinor drawn from the run seed. Unlike a
    /// raw kernel eigenvector, whose choice inside a degenerate kernel is
    /// decided by roundoff, this depends continuously on the map.
    fn default_spinor(
        &self,
        op: &DiracOperator,
        report: &SpectralReport,
        u: &MapField,
    ) -> Result<ConstraintSolution, FlowError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let seed = TwistedSpinorField::smooth_random(&self.geometry, u, 1, &mut rng);
        match project_to_kernel(op, report, &seed, None, DEFAULT_PROJECTION_TOL) {
            Err(DiracError::ProjectionDegenerate { .. }) => {
                let e = report.kernel_vectors()[0].clone();
                Ok(project_to_kernel(
                    op,
                    report,
                    &e,
                    None,
                    DEFAULT_PROJECTION_TOL,
                )?)
            }
            r => Ok(r?),
        }
    }

    /// Rebuilds a recorded state: the spinor is taken as stored instead of
    /// being re-projected, so a resumed run repeats the original one.
    pub fn resume_state(
        &self,
        t: f64,
        step: usize,
        u: MapField,
        psi: Option<&TwistedSpinorField>,
    ) -> Result<FlowState, FlowError> {
        let Some(psi) = psi.filter(|_| self.coupled()) else {
            return self.state_at(t, step, u, None);
        };
        let (op, report) = self.spectrum_at(&u, None)?;
        if !self.admissible(&report) {
            return self.build_state(t, step, u, None, Some(report));
        }
        let residual = weighted_norm(&op.apply(psi.values()), self.geometry.cell_area());
        self.build_state(t, step, u, Some((psi.clone(), report, residual)), None)
    }

    /// Whether `state` is a valid point of the coupled flow.
    pub fn is_regular(&self, state: &FlowState) -> bool {
        !self.coupled() || state.psi.is_some()
    }

    /// One IMEX step: implicit Laplacian, explicit nonlinear terms, nodewise
    /// projection onto the target, then the constraint re-solve. The step
    /// size halves while the energy grows by more than the tolerance.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<StepResult, FlowError> {
        let g = &self.geometry;
        let q = g.q();
        let alpha = self.config.alpha;
        let energy_tol = self.energy_tol.unwrap_or(0.0);
        let e_old = state.diagnostics.energy_alpha;
        let mut explicit = state.rhs.clone();
        for a in 0..q {
            let lap = g.spectral.laplacian(&state.u.component(a));
            let mut comp = explicit.component(a);
            comp.iter_mut().zip(&lap).for_each(|(c, l)| *c -= l);
            explicit.set_component(a, &comp);
        }
        let mut dt = dt;
        let mut rejected = Vec::new();
        for _ in 0..=self.config.max_dt_halvings {
            let moved = state.u.axpy(dt, &explicit);
            let mut smoothed = moved.clone();
            for a in 0..q {
                smoothed.set_component(a, &g.spectral.solve_heat(&moved.component(a), dt));
            }
            let u_new = smoothed.project(&g.target)?;
            let e_new = energy_alpha(g, &u_new, alpha);
            if !e_new.is_finite() {
                return Err(FlowError::NumericalFailure(format!(
                    "non-finite energy at t = {}",
                    state.t + dt
                )));
            }
            if e_new > e_old + energy_tol {
                rejected.push(dt);
                dt *= 0.5;
                continue;
            }
            let mut velocity = u_new.axpy(-1.0, &state.u);
            velocity.values_mut().iter_mut().for_each(|x| *x /= dt);
            let w = weight(g, &state.u, alpha);
            let weighted_dissipation = weighted_square(g, Some(&w), &velocity);
            let t = state.t + dt;
            let step = state.step + 1;
            if !self.coupled() {
                let state = self.build_state(t, step, u_new, None, None)?;
                return Ok(StepResult::Accepted {
                    state,
                    dt,
                    weighted_dissipation,
                    rejected,
                });
            }
            let warm = state.report.as_ref().and_then(|r| r.warm_start());
            let (op, report) = self.spectrum_at(&u_new, warm)?;
            if !self.admissible(&report) {
                let reason = self.singular_reason(&report);
                let state = self.build_state(t, step, u_new, None, Some(report))?;
                return Ok(StepResult::Singular {
                    state,
                    dt,
                    rejected,
                    reason,
                });
            }
            let psi = state.psi.as_ref().ok_or_else(|| {
                FlowError::NumericalFailure("coupled step from a state without spinor".into())
            })?;
            let transported = transport_spinor(g, psi, &state.u, &u_new)?;
            match project_to_kernel(&op, &report, &transported, None, DEFAULT_PROJECTION_TOL) {
                Ok(sol) => {
                    let state = self.build_state(
                        t,
                        step,
                        u_new,
                        Some((sol.psi, sol.report, sol.residual)),
                        None,
                    )?;
                    return Ok(StepResult::Accepted {
                        state,
                        dt,
                        weighted_dissipation,
                        rejected,
                    });
                }
                Err(DiracError::ProjectionDegenerate { norm, tol }) => {
                    let state = self.build_state(t, step, u_new, None, Some(report))?;
                    return Ok(StepResult::Singular {
                        state,
                        dt,
                        rejected,
                        reason: format!("kernel projection norm {norm:.3e} below {tol:.3e}"),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(FlowError::NumericalFailure(format!(
            "energy still increased after {} step halvings at t = {}",
            self.config.max_dt_halvings, state.t
        )))
    }

    /// Perturb-and-test restart: tries `π(u + η)` for smooth random `η` with
    /// both signs and the configured amplitudes, and accepts the first candidate
    /// with lower `E^α`, the same homotopy invariants and an admissible kernel.
    /// A regular state is returned unchanged.
    pub fn restart_map(
        &self,
        state: &FlowState,
        rng: &mut ChaCha8Rng,
    ) -> Result<Restarted, FlowError> {
        if self.is_regular(state) {
            return Ok(Restarted {
                state: state.clone(),
                attempts: 0,
                amplitude: 0.0,
            });
        }
        let g = &self.geometry;
        let policy = &self.config.restart;
        let energy = state.diagnostics.energy_alpha;
        let invariants = homotopy_invariants(g, &state.u)?;
        let radius = g.target.radius();
        let warm = state.report.as_ref().and_then(|r| r.warm_start());
        let mut eta = MapField::from_values(g.q(), vec![0.0; g.nodes() * g.q()]);
        let mut amplitude = 0.0;
        for attempt in 0..policy.max_attempts {
            if attempt % 2 == 0 {
                eta = smooth_random_field(&g.domain, g.q(), policy.max_mode, rng);
                let a = policy.amplitudes[(attempt / 2) % policy.amplitudes.len()];
                amplitude = (a * radius).min(self.resolved.ball_radius);
            }
            let sign = if attempt % 2 == 0 { 1.0 } else { -1.0 };
            let Ok(candidate) = state.u.axpy(sign * amplitude, &eta).project(&g.target) else {
                continue;
            };
            if energy_alpha(g, &candidate, self.config.alpha) >= energy {
                continue;
            }
            match homotopy_invariants(g, &candidate) {
                Ok(inv) if inv == invariants => {}
                _ => continue,
            }
            if !self.coupled() {
                let state = self.build_state(state.t, state.step, candidate, None, None)?;
                return Ok(Restarted {
                    state,
                    attempts: attempt + 1,
                    amplitude,
                });
            }
            let (op, report) = self.spectrum_at(&candidate, warm)?;
            if !self.admissible(&report) {
                continue;
            }
            let fresh = report.kernel_vectors()[0].clone();
            let Ok(sol) = project_to_kernel(&op, &report, &fresh, None, DEFAULT_PROJECTION_TOL)
            else {
                continue;
            };
            let state = self.build_state(
                state.t,
                state.step,
                candidate,
                Some((sol.psi, sol.report, sol.residual)),
                None,
            )?;
            return Ok(Restarted {
                state,
                attempts: attempt + 1,
                amplitude,
            });
        }
        Err(FlowError::RestartExhausted {
            attempts: policy.max_attempts,
        })
    }

    fn restart_rng(&self, step: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(
            self.config.seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        )
    }

    fn row(state: &FlowState, event: &str) -> SeriesRow {
        let d = &state.diagnostics;
        SeriesRow {
            t: state.t,
            energy_alpha: d.energy_alpha,
            dirichlet: d.dirichlet,
            dissipation: d.dissipation,
            gap: d.gap,
            kernel_dim: d.kernel_dim,
            psi_l2: d.psi_l2,
            map_residual: d.map_residual,
            spinor_residual: d.spinor_residual,
            event: event.to_string(),
        }
    }

    /// Runs from `state` until stationarity, `t_max`, `max_steps` or a
    /// terminal failure. `observer` sees every recorded state with its row.
    pub fn run(
        &self,
        state: FlowState,
        observer: &mut dyn FnMut(&FlowState, &SeriesRow),
    ) -> Trajectory {
        let mut run = Run {
            flow: self,
            events: Vec::new(),
            ledger: Vec::new(),
            rows: Vec::new(),
            samples: Vec::new(),
            segment: 0,
            segment_energy: state.diagnostics.energy_alpha,
            cumulative: 0.0,
            restarts: 0,
            blowup_flagged: false,
        };
        let mut state = state;
        let mut pending: Vec<FlowEvent> = Vec::new();
        let mut singular_from: Option<f64> = None;
        let outcome = 'outer: loop {
            if !self.is_regular(&state) {
                let report = state.report.as_ref();
                let mut ev = FlowEvent::new(EventKind::SingularTime, state.t, state.step)
                    .with_detail(report.map_or(String::new(), |r| self.singular_reason(r)));
                ev.kernel_dim = report.map(|r| r.kernel_dim);
                ev.gap = report.and_then(|r| r.gap);
                ev.energy_before = singular_from.take();
                ev.energy_after = Some(state.diagnostics.energy_alpha);
                pending.push(ev);
                match run.restart(&mut state, &mut pending) {
                    Ok(()) => {}
                    Err(outcome) => {
                        run.record(&state, &mut pending, observer, true);
                        break 'outer outcome;
                    }
                }
            }
            run.record(&state, &mut pending, observer, false);
            if state.diagnostics.dissipation < self.resolved.stationary_tol {
                pending.push(
                    FlowEvent::new(EventKind::Stationary, state.t, state.step).with_detail(
                        format!(
                            "dissipation {:.3e} below {:.3e}",
                            state.diagnostics.dissipation, self.resolved.stationary_tol
                        ),
                    ),
                );
                break Outcome::Stationary;
            }
            let remaining = self.config.t_max - state.t;
            if remaining <= 1e-12 * self.config.t_max || state.step >= self.config.max_steps {
                pending.push(FlowEvent::new(EventKind::TimeLimit, state.t, state.step));
                break Outcome::TimeLimit;
            }
            let dt = self.config.dt.min(remaining);
            match self.step(&state, dt) {
                Ok(StepResult::Accepted {
                    state: next,
                    dt,
                    weighted_dissipation,
                    rejected,
                }) => {
                    for r in rejected {
                        pending.push(
                            FlowEvent::new(EventKind::StepRejected, state.t, state.step)
                                .with_detail(format!("dt = {r:.6e}")),
                        );
                    }
                    run.cumulative += dt * weighted_dissipation;
                    let e = next.diagnostics.energy_alpha;
                    let alpha = self.config.alpha;
                    run.ledger.push(LedgerEntry {
                        step: next.step,
                        t: next.t,
                        dt,
                        energy: e,
                        weighted_dissipation,
                        residual: e - run.segment_energy + alpha * run.cumulative,
                        residual_2alpha: e - run.segment_energy + 2.0 * alpha * run.cumulative,
                        segment: run.segment,
                    });
                    state = next;
                    run.check_blowup(&state, &mut pending);
                }
                Ok(StepResult::Singular {
                    state: singular,
                    rejected,
                    ..
                }) => {
                    for r in rejected {
                        pending.push(
                            FlowEvent::new(EventKind::StepRejected, state.t, state.step)
                                .with_detail(format!("dt = {r:.6e}")),
                        );
                    }
                    singular_from = Some(state.diagnostics.energy_alpha);
                    state = singular;
                }
                Err(e) => {
                    pending.push(
                        FlowEvent::new(EventKind::NumericalFailure, state.t, state.step)
                            .with_detail(e.to_string()),
                    );
                    break Outcome::NumericalFailure;
                }
            }
        };
        run.flush(&state, &mut pending);
        Trajectory {
            samples: run.samples,
            events: run.events,
            ledger: run.ledger,
            rows: run.rows,
            outcome,
            final_state: state,
        }
    }
}

/// Bookkeeping of one run.
struct Run<'a> {
    flow: &'a Flow,
    events: Vec<FlowEvent>,
    ledger: Vec<LedgerEntry>,
    rows: Vec<SeriesRow>,
    samples: Vec<FlowSample>,
    segment: usize,
    segment_energy: f64,
    cumulative: f64,
    restarts: usize,
    blowup_flagged: bool,
}

impl Run<'_> {
    fn record(
        &mut self,
        state: &FlowState,
        pending: &mut Vec<FlowEvent>,
        observer: &mut dyn FnMut(&FlowState, &SeriesRow),
        terminal: bool,
    ) {
        let label: Vec<&str> = pending.iter().map(|e| e.kind.as_str()).collect();
        let row = Flow::row(state, &label.join("|"));
        observer(state, &row);
        self.rows.push(row);
        self.events.append(pending);
        if terminal || state.step.is_multiple_of(self.flow.config.sample_stride) || self.samples.is_empty() {
            self.samples.push(FlowSample::from(state));
        }
    }

    /// Attaches the terminal events to the last row.
    fn flush(&mut self, state: &FlowState, pending: &mut Vec<FlowEvent>) {
        if pending.is_empty() {
            return;
        }
        if let Some(row) = self.rows.last_mut() {
            for e in pending.iter() {
                if !row.event.is_empty() {
                    row.event.push('|');
                }
                row.event.push_str(e.kind.as_str());
            }
        }
        if self.samples.last().is_none_or(|s| s.step != state.step) {
            self.samples.push(FlowSample::from(state));
        }
        self.events.append(pending);
    }

    fn restart(
        &mut self,
        state: &mut FlowState,
        pending: &mut Vec<FlowEvent>,
    ) -> Result<(), Outcome> {
        let flow = self.flow;
        self.restarts += 1;
        let exhausted = |detail: String| {
            FlowEvent::new(EventKind::RestartExhausted, state.t, state.step).with_detail(detail)
        };
        if self.restarts > flow.config.restart.max_restarts {
            pending.push(exhausted(format!(
                "more than {} restarts",
                flow.config.restart.max_restarts
            )));
            return Err(Outcome::RestartExhausted);
        }
        let mut rng = flow.restart_rng(state.step);
        match flow.restart_map(state, &mut rng) {
            Ok(restarted) => {
                let mut ev =
                    FlowEvent::new(EventKind::Restart, state.t, state.step).with_detail(format!(
                        "accepted after {} candidates at amplitude {:.4e}",
                        restarted.attempts, restarted.amplitude
                    ));
                ev.energy_before = Some(state.diagnostics.energy_alpha);
                ev.energy_after = Some(restarted.state.diagnostics.energy_alpha);
                ev.kernel_dim = restarted.state.diagnostics.kernel_dim;
                ev.gap = restarted.state.diagnostics.gap;
                pending.push(ev);
                *state = restarted.state;
                self.segment += 1;
                self.segment_energy = state.diagnostics.energy_alpha;
                self.cumulative = 0.0;
                self.blowup_flagged = false;
                Ok(())
            }
            Err(FlowError::RestartExhausted { attempts }) => {
                pending.push(exhausted(format!(
                    "no admissible candidate in {attempts} attempts"
                )));
                Err(Outcome::RestartExhausted)
            }
            Err(e) => {
                pending.push(
                    FlowEvent::new(EventKind::NumericalFailure, state.t, state.step)
                        .with_detail(e.to_string()),
                );
                Err(Outcome::NumericalFailure)
            }
        }
    }

    /// Flags gradients at the grid scale, `|∇u|² ≥ 1/(4h²)`.
    fn check_blowup(&mut self, state: &FlowState, pending: &mut Vec<FlowEvent>) {
        if self.blowup_flagged {
            return;
        }
        let [h1, h2] = self.flow.geometry.domain.spacing();
        let h = h1.max(h2);
        let limit = 0.25 / (h * h);
        if state.diagnostics.max_density >= limit {
            self.blowup_flagged = true;
            pending.push(
                FlowEvent::new(EventKind::BlowupSuspected, state.t, state.step).with_detail(
                    format!(
                        "max |∇u|² = {:.4e} reaches the grid limit {:.4e}",
                        state.diagnostics.max_density, limit
                    ),
                ),
            );
        }
    }
}

/// Runs the flow from `(u₀, ψ₀)` with the given configuration.
pub fn run_flow(
    geometry: &Geometry,
    config: &FlowConfig,
    u0: &MapField,
    psi0: Option<&TwistedSpinorField>,
) -> Result<Trajectory, FlowError> {
    let mut flow = Flow::new(geometry.clone(), config.clone())?;
    let state = flow.initial_state(u0, psi0)?;
    Ok(flow.run(state, &mut |_, _| {}))
}
