//! The invariant suite behind `validate`: every check reports its measured
//! value next to the allowed one.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{RunConfig, Start};
use super::CliError;
use crate::dirac::{
    assemble_operator, compute_spectrum_with, holonomy_check, operator_lipschitz_check,
    project_to_kernel, solve_constraint, transport_spinor, DiracOperator, SpectralReport,
    SpectrumOptions, TwistedSpinorField, DEFAULT_PROJECTION_TOL,
};
use crate::flow::{
    curvature_pairing_check, energy_alpha, run_flow, variational_consistency_check, FlowConfig,
    SpinorMode,
};
use crate::geometry::{smooth_random_field, Geometry, MapField};

type C = Complex64;

pub const VALIDATION_FORMAT: &str = "dhflow-validation/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub measured: Option<f64>,
    pub allowed: Option<f64>,
    /// `"<="` or `">="`: how `measured` must compare with `allowed`.
    pub relation: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub format: &'static str,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }
}

fn at_most(name: &str, measured: f64, allowed: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        status: if measured <= allowed {
            Status::Pass
        } else {
            Status::Fail
        },
        measured: Some(measured),
        allowed: Some(allowed),
        relation: "<=",
        detail,
    }
}

fn at_least(name: &str, measured: f64, allowed: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        status: if measured >= allowed {
            Status::Pass
        } else {
            Status::Fail
        },
        measured: Some(measured),
        allowed: Some(allowed),
        relation: ">=",
        detail,
    }
}

fn skipped(name: &str, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        status: Status::Skip,
        measured: None,
        allowed: None,
        relation: "",
        detail,
    }
}

fn errored(name: &str, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        status: Status::Fail,
        measured: None,
        allowed: None,
        relation: "",
        detail,
    }
}

/// Constants below this are rounding noise (flat targets have exactly
/// trivial holonomy).
const ROUNDING_FLOOR: f64 = 1e-10;

/// Relative change between the constants measured at two amplitudes.
fn drift(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale <= ROUNDING_FLOOR {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `|⟨Dx, y⟩ − ⟨x, Dy⟩| / (μ ‖x‖ ‖y‖)` over random pairs, for operators too
/// large to assemble densely.
fn sampled_hermiticity(op: &DiracOperator, rng: &mut ChaCha8Rng, pairs: usize) -> f64 {
    let dim = op.dim();
    let mut worst = 0.0f64;
    let random = |rng: &mut ChaCha8Rng| -> Vec<C> {
        (0..dim)
            .map(|_| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect()
    };
    for _ in 0..pairs {
        let x = random(rng);
        let y = random(rng);
        let (dx, dy) = (op.apply(&x), op.apply(&y));
        let a: C = dx.iter().zip(&y).map(|(p, q)| p.conj() * q).sum();
        let b: C = x.iter().zip(&dy).map(|(p, q)| p.conj() * q).sum();
        let nx = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max((a - b).norm() / (op.mass() * nx * ny));
    }
    worst
}

struct Suite<'a> {
    config: &'a RunConfig,
    geometry: Geometry,
    base: MapField,
    seed: u64,
    checks: Vec<CheckResult>,
}

impl Suite<'_> {
    /// Independent generator per check so that checks do not shift each
    /// other's random streams.
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Smooth random ambient field with unit C⁰ norm.
    fn field(&self, rng: &mut ChaCha8Rng) -> MapField {
        let g = &self.geometry;
        smooth_random_field(&g.domain, g.q(), self.config.validate.max_mode, rng)
    }

    fn random_map(&self, rng: &mut ChaCha8Rng) -> Result<MapField, CliError> {
        let eta = self.field(rng);
        Ok(self
            .base
            .axpy(self.config.validate.map_amplitude, &eta)
            .project(&self.geometry.target)?)
    }

    fn spectrum_options(&self) -> SpectrumOptions {
        let mut opts = SpectrumOptions::new(&self.geometry, self.config.spectrum.count);
        if let Some(t) = self.config.spectrum.kernel_tol {
            opts.kernel_tol = t;
        }
        opts.method = self.config.spectrum.method;
        opts.seed = self.seed;
        opts
    }

    fn push(&mut self, name: &str, result: Result<CheckResult, CliError>) {
        self.checks
            .push(result.unwrap_or_else(|e| errored(name, e.to_string())));
    }

    fn operators(&mut self) {
        let tol = self.config.validate.tolerances.clone();
        let mut rng = self.rng(1);
        let mut herm = 0.0f64;
        let mut pairing = 0.0f64;
        let mut sampled = false;
        let result = (|| -> Result<(), CliError> {
            for _ in 0..self.config.validate.maps {
                let u = self.random_map(&mut rng)?;
                let op = assemble_operator(&self.geometry, &u)?;
                let h = match op.hermiticity_residual() {
                    Some(h) => h,
                    None => {
                        sampled = true;
                        sampled_hermiticity(&op, &mut rng, 8)
                    }
                };
                herm = herm.max(h);
                let report = compute_spectrum_with(&op, &self.spectrum_options())?;
                pairing = pairing.max(report.pairing_defect);
            }
            Ok(())
        })();
        match result {
            Ok(()) => {
                let maps = self.config.validate.maps;
                let how = if sampled {
                    "sampled bilinear form"
                } else {
                    "dense adjoint"
                };
                self.checks.push(at_most(
                    "hermiticity",
                    herm,
                    tol.hermiticity,
                    format!("{maps} random maps, {how}"),
                ));
                self.checks.push(at_most(
                    "spectral_symmetry",
                    pairing,
                    tol.spectral_pairing,
                    format!("{maps} random maps, ± pairing of the returned window"),
                ));
            }
            Err(e) => {
                self.checks.push(errored("hermiticity", e.to_string()));
                self.checks
                    .push(errored("spectral_symmetry", e.to_string()));
            }
        }
    }

    fn distance_bound(&self) -> Result<CheckResult, CliError> {
        let target = &self.geometry.target;
        let delta = target.tube_radius();
        let c = target.weingarten_bound();
        let mut rng = self.rng(2);
        let mut worst = 1.0f64;
        let mut sampled = 0;
        while sampled < self.config.validate.distance_pairs {
            let p = target.random_point(&mut rng);
            let v = target.random_tangent(&p, &mut rng);
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let len = rng.gen::<f64>() * delta;
            let z: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + len * b / nv).collect();
            let q = target.project(&z)?;
            let chord = p
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if chord >= delta {
                continue;
            }
            worst = worst.max(target.distance_comparison_check(&p, &q)?);
            sampled += 1;
        }
        Ok(at_most(
            "distance_bound",
            worst,
            1.0 / (1.0 - delta * c),
            format!("{sampled} pairs with chord below δ = {delta}"),
        ))
    }

    fn transport_isometry(&self) -> Result<CheckResult, CliError> {
        let target = &self.geometry.target;
        let mut rng = self.rng(3);
        let mut worst = 0.0f64;
        let mut sampled = 0;
        while sampled < self.config.validate.transport_pairs {
            let p = target.random_point(&mut rng);
            let q = target.random_point(&mut rng);
            if target.geodesic_distance(&p, &q).is_err() {
                continue;
            }
            let x = target.random_tangent(&p, &mut rng);
            let y = target.random_tangent(&p, &mut rng);
            let px = target.parallel_transport(&p, &q, &x)?;
            let py = target.parallel_transport(&p, &q, &y)?;
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(s, t)| s * t).sum::<f64>();
            worst = worst.max((dot(&px, &py) - dot(&x, &y)).abs());
            sampled += 1;
        }
        Ok(at_most(
            "transport_isometry",
            worst,
            self.config.validate.tolerances.transport_isometry,
            format!("{sampled} random pairs"),
        ))
    }

    fn operator_lipschitz(&self) -> Result<CheckResult, CliError> {
        let v = &self.config.validate;
        let g = &self.geometry;
        let mut rng = self.rng(4);
        let u = self.random_map(&mut rng)?;
        let eta = self.field(&mut rng);
        let mut constants = [0.0; 2];
        for (k, c) in constants.iter_mut().enumerate() {
            let a = v.lipschitz_amplitude / (1 << k) as f64;
            let w = u.axpy(a, &eta).project(&g.target)?;
            let mut trial_rng = self.rng(5);
            *c = operator_lipschitz_check(g, &w, &u, v.lipschitz_trials, &mut trial_rng)?;
        }
        lipschitz_result(
            "dirac_lipschitz",
            constants,
            v.lipschitz_amplitude,
            v.tolerances.lipschitz_drift,
        )
    }

    fn holonomy(&self) -> Result<CheckResult, CliError> {
        let v = &self.config.validate;
        let g = &self.geometry;
        let mut rng = self.rng(6);
        let u0 = self.random_map(&mut rng)?;
        let e1 = self.field(&mut rng);
        let e2 = self.field(&mut rng);
        let u = u0.axpy(v.lipschitz_amplitude, &e1).project(&g.target)?;
        let mut constants = [0.0; 2];
        for (k, c) in constants.iter_mut().enumerate() {
            let a = v.lipschitz_amplitude / (1 << k) as f64;
            let w = u.axpy(a, &e2).project(&g.target)?;
            let mut z_rng = self.rng(7);
            *c = holonomy_check(g, &u0, &u, &w, &mut z_rng)?;
        }
        lipschitz_result(
            "transport_holonomy",
            constants,
            v.lipschitz_amplitude,
            v.tolerances.lipschitz_drift,
        )
    }

    /// Kernel spinor at the initial map, when the kernel there is minimal.
    fn base_kernel(
        &self,
    ) -> Result<Result<(SpectralReport, TwistedSpinorField), String>, CliError> {
        let op = assemble_operator(&self.geometry, &self.base)?;
        let report = compute_spectrum_with(&op, &self.spectrum_options())?;
        if !report.is_minimal() {
            return Ok(Err(format!(
                "kernel at the initial map has complex dimension {}, not 2",
                report.kernel_dim
            )));
        }
        let psi = report.kernel_vectors()[0].clone();
        Ok(Ok((report, psi)))
    }

    fn constraint_lipschitz(&self) -> Result<CheckResult, CliError> {
        let name = "constraint_lipschitz";
        let v = &self.config.validate;
        let g = &self.geometry;
        let psi0 = match self.base_kernel()? {
            Ok((_, psi)) => psi,
            Err(reason) => return Ok(skipped(name, reason)),
        };
        let mut rng = self.rng(8);
        let eta = self.field(&mut rng);
        let opts = self.spectrum_options();
        let mut constants = [0.0; 2];
        for (k, c) in constants.iter_mut().enumerate() {
            let a = v.lipschitz_amplitude / (1 << k) as f64;
            let u = self.base.axpy(a, &eta).project(&g.target)?;
            let sol = solve_constraint(g, &u, &psi0, &self.base, Some(&psi0), &opts)?;
            *c = sol.psi.sub(&psi0).c0_norm() / u.c0_distance(&self.base);
        }
        lipschitz_result(
            name,
            constants,
            v.lipschitz_amplitude,
            v.tolerances.lipschitz_drift,
        )
    }

    fn projection_bound(&self, ball_radius: f64) -> Result<CheckResult, CliError> {
        let name = "projection_lower_bound";
        let g = &self.geometry;
        let psi0 = match self.base_kernel()? {
            Ok((_, psi)) => psi,
            Err(reason) => return Ok(skipped(name, reason)),
        };
        let mut rng = self.rng(9);
        let opts = self.spectrum_options();
        let mut worst = f64::INFINITY;
        for _ in 0..self.config.validate.maps {
            let eta = self.field(&mut rng);
            let u = self.base.axpy(ball_radius, &eta).project(&g.target)?;
            let op = assemble_operator(g, &u)?;
            let report = compute_spectrum_with(&op, &opts)?;
            let moved = transport_spinor(g, &psi0, &self.base, &u)?;
            let sol = project_to_kernel(&op, &report, &moved, None, DEFAULT_PROJECTION_TOL)?;
            worst = worst.min(sol.projection_norm);
        }
        Ok(at_least(
            name,
            worst,
            self.config.validate.tolerances.projection_lower,
            format!(
                "{} maps at C⁰ distance R = {ball_radius} from the initial map",
                self.config.validate.maps
            ),
        ))
    }

    fn energy_identity(&mut self) {
        let v = self.config.validate.clone();
        let result = (|| -> Result<(f64, f64, f64, f64), CliError> {
            let mut rng = self.rng(10);
            let u0 = self.random_map(&mut rng)?;
            let mut residuals = [0.0; 2];
            let mut worst_increase = f64::NEG_INFINITY;
            let mut cfg = FlowConfig {
                spinor: SpinorMode::Disabled,
                t_max: v.energy_time,
                ..self.config.flow.clone()
            };
            for (k, r) in residuals.iter_mut().enumerate() {
                cfg.dt = v.energy_dt / (1 << k) as f64;
                let traj = run_flow(&self.geometry, &cfg, &u0, None)?;
                *r = traj.ledger.last().map_or(0.0, |e| e.residual.abs());
                worst_increase = worst_increase.max(traj.max_energy_increase());
            }
            let e0 = energy_alpha(&self.geometry, &u0, cfg.alpha);
            Ok((
                residuals[0],
                residuals[1],
                worst_increase,
                cfg.energy_tol_rel * e0,
            ))
        })();
        match result {
            Ok((r1, r2, increase, tol)) => {
                let detail = format!(
                    "|residual| {r1:.3e} at dt = {} and {r2:.3e} at dt/2, t = {}",
                    v.energy_dt, v.energy_time
                );
                let ratio = if r2 > 0.0 { r1 / r2 } else { f64::INFINITY };
                self.checks.push(at_least(
                    "energy_identity",
                    ratio,
                    v.tolerances.energy_identity_ratio,
                    detail,
                ));
                self.checks.push(at_most(
                    "energy_monotonicity",
                    increase,
                    tol,
                    "largest energy increase over accepted steps".into(),
                ));
            }
            Err(e) => {
                self.checks.push(errored("energy_identity", e.to_string()));
                self.checks
                    .push(errored("energy_monotonicity", e.to_string()));
            }
        }
    }

    fn variational(&self) -> Result<CheckResult, CliError> {
        let v = &self.config.validate;
        let g = &self.geometry;
        let mut rng = self.rng(11);
        let mut worst = 0.0f64;
        let mut worst_improvement = f64::INFINITY;
        for _ in 0..v.maps {
            let u = self.random_map(&mut rng)?;
            let psi = TwistedSpinorField::smooth_random(g, &u, v.max_mode, &mut rng);
            let eta = self.field(&mut rng);
            let alpha = self.config.flow.alpha;
            let mut fd = [0.0; 3];
            for (k, value) in fd.iter_mut().enumerate() {
                let step = v.fd_step / (1 << k) as f64;
                let check = variational_consistency_check(g, &u, Some(&psi), alpha, &eta, step)?;
                if k == 1 {
                    worst = worst.max(check.relative_error);
                }
                *value = check.finite_difference;
            }
            // Richardson ratio of successive differences; 4 for a second
            // order difference quotient. Differences at rounding level carry
            // no convergence information.
            let (d1, d2) = ((fd[0] - fd[1]).abs(), (fd[1] - fd[2]).abs());
            if d1 > 1e-10 * fd[0].abs() {
                worst_improvement = worst_improvement.min(d1 / d2);
            }
        }
        let mut result = at_most(
            "variational_consistency",
            worst,
            v.tolerances.variational,
            format!(
                "{} states at step {}; smallest Richardson ratio {worst_improvement:.2}",
                v.maps,
                0.5 * v.fd_step
            ),
        );
        if worst_improvement < v.tolerances.variational_improvement {
            result.status = Status::Fail;
            result.detail.push_str(&format!(
                " (below the required {})",
                v.tolerances.variational_improvement
            ));
        }
        Ok(result)
    }

    fn curvature_pairing(&self) -> Result<CheckResult, CliError> {
        let v = &self.config.validate;
        let g = &self.geometry;
        let mut rng = self.rng(12);
        let mut worst = 0.0f64;
        let mut worst_abs = 0.0f64;
        for _ in 0..v.maps {
            let u = self.random_map(&mut rng)?;
            let psi = TwistedSpinorField::smooth_random(g, &u, v.max_mode, &mut rng);
            let dir = self.field(&mut rng);
            let check = curvature_pairing_check(g, &u, &psi, &dir, v.curvature_fd_step)?;
            worst_abs = worst_abs.max(check.analytic.abs().max(check.finite_difference.abs()));
            worst = worst.max(check.relative_error);
        }
        if g.target.is_flat() {
            // The derivative vanishes identically on a flat target, so only
            // its absolute size is meaningful.
            return Ok(at_most(
                "curvature_pairing",
                worst_abs,
                v.tolerances.curvature_pairing,
                format!("flat target: largest |derivative| over {} triples", v.maps),
            ));
        }
        Ok(at_most(
            "curvature_pairing",
            worst,
            v.tolerances.curvature_pairing,
            format!("{} random triples, step {}", v.maps, v.curvature_fd_step),
        ))
    }
}

fn lipschitz_result(
    name: &str,
    constants: [f64; 2],
    amplitude: f64,
    allowed: f64,
) -> Result<CheckResult, CliError> {
    let detail = format!(
        "constants {:.6e} at amplitude {amplitude} and {:.6e} at {}",
        constants[0],
        constants[1],
        0.5 * amplitude
    );
    if !constants.iter().all(|c| c.is_finite()) {
        return Ok(errored(name, format!("non-finite constant: {detail}")));
    }
    Ok(at_most(
        name,
        drift(constants[0], constants[1]),
        allowed,
        detail,
    ))
}

/// Runs every check on the configured domain, target and initial map.
pub fn run_validation(config: &RunConfig) -> Result<ValidationReport, CliError> {
    let geometry = config.geometry()?;
    let base = match config.initial_data(&geometry)? {
        Start::Map(u) => u,
        Start::Checkpoint(c) => c.u,
    };
    let ball_radius = config.flow.ball_radius.unwrap_or_else(|| {
        crate::geometry::TubeConstants::for_target(&geometry.target).ball_radius
    });
    let mut suite = Suite {
        config,
        geometry,
        base,
        seed: config.seed(),
        checks: Vec::new(),
    };
    suite.operators();
    let r = suite.distance_bound();
    suite.push("distance_bound", r);
    let r = suite.transport_isometry();
    suite.push("transport_isometry", r);
    let r = suite.operator_lipschitz();
    suite.push("dirac_lipschitz", r);
    let r = suite.holonomy();
    suite.push("transport_holonomy", r);
    let r = suite.constraint_lipschitz();
    suite.push("constraint_lipschitz", r);
    let r = suite.projection_bound(ball_radius);
    suite.push("projection_lower_bound", r);
    suite.energy_identity();
    let r = suite.variational();
    suite.push("variational_consistency", r);
    let r = suite.curvature_pairing();
    suite.push("curvature_pairing", r);
    let passed = suite.checks.iter().all(|c| c.status != Status::Fail);
    Ok(ValidationReport {
        format: VALIDATION_FORMAT,
        seed: suite.seed,
        passed,
        checks: suite.checks,
    })
}
