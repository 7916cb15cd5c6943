//! Acceptance suite. Runs every criterion in sequence (so runtimes are
//! measured without interference), prints one line per criterion and exits
//! non-zero when any of them fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dhflow::analysis::homotopy_invariants;
use dhflow::dirac::{
    assemble_operator, compute_spectrum_with, free_spectrum, holonomy_check,
    operator_lipschitz_check, project_to_kernel, solve_constraint, transport_spinor,
    SpectrumOptions, TwistedSpinorField, DEFAULT_PROJECTION_TOL,
};
use dhflow::flow::{
    alpha_continuation, curvature_pairing_check, run_flow, variational_consistency_check,
    EventKind, Flow, FlowConfig, Outcome, SpinorMode, StepResult,
};
use dhflow::geometry::{
    smooth_random_field, Geometry, MapField, SpinStructure, TargetManifold, TorusDomain,
    TubeConstants,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

type Criterion = fn() -> Verdict;

fn geometry(n: usize, target: TargetManifold) -> Geometry {
    Geometry::new(
        TorusDomain::square(n, SpinStructure::TRIVIAL).unwrap(),
        target,
    )
}

fn sphere(dim: usize) -> TargetManifold {
    TargetManifold::sphere(dim, 1.0).unwrap()
}

fn north(dim: usize) -> Vec<f64> {
    let mut p = vec![0.0; dim + 1];
    p[dim] = 1.0;
    p
}

fn perturbed(
    g: &Geometry,
    base: &MapField,
    amplitude: f64,
    max_mode: i64,
    rng: &mut ChaCha8Rng,
) -> MapField {
    let eta = smooth_random_field(&g.domain, g.q(), max_mode, rng);
    base.axpy(amplitude, &eta).project(&g.target).unwrap()
}

fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

/// Sorted eigenvalues `±|k + s|` of the free operator on the torus of side
/// 2π, over a window of wave vectors wide enough for the lowest modes.
fn free_oracle(spin: SpinStructure) -> Vec<f64> {
    let [s1, s2] = spin.shift();
    let mut values = Vec::new();
    for k1 in -6..=6 {
        for k2 in -6..=6 {
            let m = ((k1 as f64 + s1).powi(2) + (k2 as f64 + s2).powi(2)).sqrt();
            values.push(-m);
            values.push(m);
        }
    }
    values.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    values
}

fn free_spectrum_exact() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for spin in SpinStructure::all() {
        let domain = TorusDomain::new(16, 16, 2.0 * PI, 2.0 * PI, spin).unwrap();
        let g = Geometry::new(domain, sphere(1));
        let computed = free_spectrum(&g).unwrap();
        let oracle = free_oracle(spin);
        // Compare whole degenerate clusters up to the 20th smallest |λ| so that
        // the signs are checked too.
        let cut = oracle[19].abs() + 1e-6;
        let mut want: Vec<f64> = oracle.into_iter().filter(|l| l.abs() <= cut).collect();
        let mut got: Vec<f64> = computed.into_iter().filter(|l| l.abs() <= cut).collect();
        if got.len() != want.len() {
            return verdict(
                false,
                format!(
                    "{spin:?}: {} computed values below {cut}, expected {}",
                    got.len(),
                    want.len()
                ),
            );
        }
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-10 && elapsed < Duration::from_secs(5),
        format!(
            "max |λ − λ_exact| = {worst:.2e} (≤ 1e-10), {:.2} s (< 5 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn hermitian_and_symmetric() -> Verdict {
    let g = geometry(12, sphere(2));
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut herm, mut pairing) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let p = g.target.random_point(&mut rng);
        let u = perturbed(&g, &MapField::constant(&g.domain, &p), 0.5, 2, &mut rng);
        let op = assemble_operator(&g, &u).unwrap();
        herm = herm.max(op.hermiticity_residual().unwrap());
        let report = compute_spectrum_with(&op, &SpectrumOptions::new(&g, 8)).unwrap();
        pairing = pairing.max(report.pairing_defect);
    }
    verdict(
        herm <= 1e-11 && pairing <= 1e-8,
        format!(
            "adjoint residual {herm:.2e} (≤ 1e-11), ± pairing {pairing:.2e} (≤ 1e-8) over 20 maps"
        ),
    )
}

fn constraint_solver() -> Verdict {
    let g = geometry(16, sphere(1));
    let u0 = MapField::constant(&g.domain, &[1.0, 0.0]);
    let opts = SpectrumOptions::new(&g, 8);
    let op = assemble_operator(&g, &u0).unwrap();
    let report = compute_spectrum_with(&op, &opts).unwrap();
    let seed = report.kernel_vectors()[0].clone();
    let base = solve_constraint(&g, &u0, &seed, &u0, None, &opts).unwrap();
    let h = g.cell_area();
    let norm = base.psi.l2_norm(h);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eta = smooth_random_field(&g.domain, g.q(), 2, &mut rng);
    let mut ratios = [0.0; 2];
    for (r, amplitude) in ratios.iter_mut().zip([1e-2, 5e-3]) {
        let u = u0.axpy(amplitude, &eta).project(&g.target).unwrap();
        let sol = solve_constraint(&g, &u, &base.psi, &u0, Some(&base.psi), &opts).unwrap();
        *r = sol.psi.sub(&base.psi).l2_norm(h) / u.c0_distance(&u0);
    }
    let change = relative_change(ratios[0], ratios[1]);
    verdict(
        base.residual <= 1e-10 && (norm - 1.0).abs() <= 1e-12 && change <= 0.25,
        format!(
            "‖D̸ψ‖ = {:.2e} (≤ 1e-10), ‖ψ‖ − 1 = {:.1e}, Lipschitz ratios {:.4} / {:.4}, change {:.1}% (≤ 25%)",
            base.residual,
            norm - 1.0,
            ratios[0],
            ratios[1],
            100.0 * change
        ),
    )
}

/// The two runs shared by the energy identity and monotonicity criteria.
fn energy_runs() -> Vec<(f64, dhflow::flow::Trajectory, Duration)> {
    let g = geometry(24, sphere(2));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u0 = perturbed(
        &g,
        &MapField::constant(&g.domain, &north(2)),
        0.3,
        2,
        &mut rng,
    );
    [1e-3, 5e-4]
        .into_iter()
        .map(|dt| {
            let config = FlowConfig {
                alpha: 1.1,
                dt,
                t_max: 0.5,
                spinor: SpinorMode::Disabled,
                ..Default::default()
            };
            let start = Instant::now();
            let traj = run_flow(&g, &config, &u0, None).unwrap();
            (dt, traj, start.elapsed())
        })
        .collect()
}

fn energy_identity() -> Verdict {
    let runs = energy_runs();
    let residual: Vec<f64> = runs
        .iter()
        .map(|(_, t, _)| t.ledger.last().unwrap().residual.abs())
        .collect();
    let reached = runs
        .iter()
        .all(|(_, t, _)| (t.final_state.t - 0.5).abs() < 1e-9);
    let slowest = runs.iter().map(|r| r.2).max().unwrap();
    let ratio = residual[0] / residual[1];
    verdict(
        reached && ratio >= 1.8 && slowest < Duration::from_secs(60),
        format!(
            "ledger residual {:.3e} (dt 1e-3) → {:.3e} (dt 5e-4), ratio {ratio:.3} (≥ 1.8), slowest run {:.2} s (< 60 s)",
            residual[0],
            residual[1],
            slowest.as_secs_f64()
        ),
    )
}

fn monotonicity() -> Verdict {
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for (_, traj, _) in energy_runs() {
        let tol = 1e-10 * traj.rows[0].energy_alpha;
        for w in traj.rows.windows(2) {
            let increase = w[1].energy_alpha - w[0].energy_alpha;
            worst = worst.max(increase);
            if increase > tol {
                violations += 1;
            }
        }
        for e in traj.events_of(EventKind::Restart) {
            if let (Some(before), Some(after)) = (e.energy_before, e.energy_after) {
                if after > before {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations, largest step change in E^α {worst:.3e}"),
    )
}

fn stationary() -> Verdict {
    let g = geometry(8, sphere(1));
    let u = MapField::constant(&g.domain, &[1.0, 0.0]);
    let config = FlowConfig {
        alpha: 1.1,
        dt: 0.01,
        ..Default::default()
    };
    let mut flow = Flow::new(g, config).unwrap();
    let s0 = flow.initial_state(&u, None).unwrap();
    let mut s = s0.clone();
    for _ in 0..100 {
        match flow.step(&s, 0.01).unwrap() {
            StepResult::Accepted { state, .. } => s = state,
            StepResult::Singular { reason, .. } => {
                return verdict(false, format!("singular step: {reason}"));
            }
        }
    }
    let du = s.u.c0_distance(&s0.u);
    let dpsi = s
        .psi
        .as_ref()
        .unwrap()
        .sub(s0.psi.as_ref().unwrap())
        .c0_norm();
    verdict(
        du <= 1e-12 && dpsi <= 1e-12,
        format!("drift after 100 steps: u {du:.2e}, ψ {dpsi:.2e} (≤ 1e-12)"),
    )
}

fn winding_convergence() -> Verdict {
    // The linear winding map x ↦ (cos x₁, sin x₁) has |∇u|² = 1, so its
    // Dirichlet energy is ½ · (2π)² = 2π².
    let exact = 2.0 * PI * PI;
    let g = geometry(32, sphere(1));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u0 = perturbed(
        &g,
        &MapField::winding(&g.domain, [1, 0], 1.0),
        0.1,
        2,
        &mut rng,
    );
    let config = FlowConfig {
        alpha: 1.0,
        dt: 0.05,
        t_max: 50.0,
        spinor: SpinorMode::Disabled,
        ..Default::default()
    };
    let start = Instant::now();
    let traj = run_flow(&g, &config, &u0, None).unwrap();
    let elapsed = start.elapsed();
    let energy = traj.final_state.diagnostics.dirichlet;
    let error = (energy - exact).abs() / exact;
    let before = homotopy_invariants(&g, &u0).unwrap();
    let after = homotopy_invariants(&g, &traj.final_state.u).unwrap();
    verdict(
        traj.outcome == Outcome::Stationary
            && error <= 0.01
            && before == after
            && elapsed < Duration::from_secs(120),
        format!(
            "{:?} at t = {:.2}, E = {energy:.8} vs 2π² = {exact:.8} (error {:.1e}, ≤ 1%), windings {before:?} → {after:?}, {:.1} s (< 120 s)",
            traj.outcome,
            traj.final_state.t,
            error,
            elapsed.as_secs_f64()
        ),
    )
}

fn variational_consistency() -> Verdict {
    let g = geometry(32, sphere(2));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_error = 0.0f64;
    let (mut min_ratio, mut max_ratio) = (f64::INFINITY, 0.0f64);
    for k in 0..10 {
        let p = g.target.random_point(&mut rng);
        let u = perturbed(&g, &MapField::constant(&g.domain, &p), 0.4, 2, &mut rng);
        let psi = TwistedSpinorField::smooth_random(&g, &u, 2, &mut rng);
        let eta = smooth_random_field(&g.domain, g.q(), 2, &mut rng);
        let psi = (k % 2 == 1).then_some(&psi);
        let alpha = 1.0 + 0.05 * (k + 1) as f64;
        let coarse = variational_consistency_check(&g, &u, psi, alpha, &eta, 2e-3).unwrap();
        let fine = variational_consistency_check(&g, &u, psi, alpha, &eta, 1e-3).unwrap();
        worst_error = worst_error.max(fine.relative_error);
        let ratio = coarse.relative_error / fine.relative_error;
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
    }
    verdict(
        worst_error <= 1e-4 && min_ratio >= 3.0 && max_ratio <= 5.0,
        format!(
            "max relative error {worst_error:.2e} (≤ 1e-4) at step 1e-3, halving ratios in [{min_ratio:.2}, {max_ratio:.2}] (≈ 4)"
        ),
    )
}

fn curvature_pairing() -> Verdict {
    let g = geometry(16, sphere(2));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let p = g.target.random_point(&mut rng);
        let u = perturbed(&g, &MapField::constant(&g.domain, &p), 0.4, 2, &mut rng);
        let psi = TwistedSpinorField::smooth_random(&g, &u, 2, &mut rng);
        let v = smooth_random_field(&g.domain, g.q(), 2, &mut rng);
        let check = curvature_pairing_check(&g, &u, &psi, &v, 1e-4).unwrap();
        worst = worst.max(check.relative_error);
    }
    verdict(
        worst <= 1e-6,
        format!("max relative error {worst:.2e} (≤ 1e-6) over 10 triples"),
    )
}

fn lipschitz_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    let target = sphere(2);
    let delta = target.tube_radius();
    let bound = 1.0 / (1.0 - delta * target.weingarten_bound());
    let mut worst_distance = 0.0f64;
    let mut pairs = 0;
    while pairs < 10_000 {
        let p = target.random_point(&mut rng);
        let v = target.random_tangent(&p, &mut rng);
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let len = rng.gen::<f64>() * delta;
        let z: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + len * b / nv).collect();
        let q = target.project(&z).unwrap();
        let chord = p
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if chord < delta {
            worst_distance = worst_distance.max(target.distance_comparison_check(&p, &q).unwrap());
            pairs += 1;
        }
    }

    let g = geometry(12, sphere(2));
    let p = g.target.random_point(&mut rng);
    let u = perturbed(&g, &MapField::constant(&g.domain, &p), 0.3, 2, &mut rng);
    let e1 = smooth_random_field(&g.domain, g.q(), 2, &mut rng);
    let e2 = smooth_random_field(&g.domain, g.q(), 2, &mut rng);
    let mut dirac = [0.0; 2];
    let mut holonomy = [0.0; 2];
    let v = u.axpy(1e-2, &e1).project(&g.target).unwrap();
    for k in 0..2 {
        let a = 1e-2 / (1 << k) as f64;
        let w = u.axpy(a, &e2).project(&g.target).unwrap();
        dirac[k] =
            operator_lipschitz_check(&g, &w, &u, 3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let w = v.axpy(a, &e2).project(&g.target).unwrap();
        holonomy[k] = holonomy_check(&g, &u, &v, &w, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
    }
    let dirac_drift = relative_change(dirac[0], dirac[1]);
    let holonomy_drift = relative_change(holonomy[0], holonomy[1]);

    // The kernel at a perturbed constant map into S³ is minimal; maps at C⁰
    // distance R from it keep a projection norm above √½.
    let g = geometry(12, sphere(3));
    let mut base_rng = ChaCha8Rng::seed_from_u64(0);
    let base = perturbed(
        &g,
        &MapField::constant(&g.domain, &north(3)),
        0.4,
        1,
        &mut base_rng,
    );
    let radius = TubeConstants::for_target(&g.target).ball_radius;
    let opts = SpectrumOptions::new(&g, 8);
    let op = assemble_operator(&g, &base).unwrap();
    let report = compute_spectrum_with(&op, &opts).unwrap();
    let psi0 = report.kernel_vectors()[0].clone();
    let mut projection = f64::INFINITY;
    for _ in 0..4 {
        let eta = smooth_random_field(&g.domain, g.q(), 1, &mut rng);
        let u = base.axpy(radius, &eta).project(&g.target).unwrap();
        let op = assemble_operator(&g, &u).unwrap();
        let report = compute_spectrum_with(&op, &opts).unwrap();
        let moved = transport_spinor(&g, &psi0, &base, &u).unwrap();
        let sol = project_to_kernel(&op, &report, &moved, None, DEFAULT_PROJECTION_TOL).unwrap();
        projection = projection.min(sol.projection_norm);
    }

    let finite = dirac.iter().chain(&holonomy).all(|c| c.is_finite());
    verdict(
        report.is_minimal()
            && worst_distance <= bound
            && finite
            && dirac_drift <= 0.25
            && holonomy_drift <= 0.25
            && projection >= 0.5f64.sqrt(),
        format!(
            "distance ratio {worst_distance:.4} ≤ {bound:.4} on 10⁴ pairs; Dirac constants {:.3}/{:.3} (drift {:.1}%), holonomy {:.3}/{:.3} (drift {:.1}%); projection norm {projection:.3} ≥ 0.707 at R = {radius}",
            dirac[0],
            dirac[1],
            100.0 * dirac_drift,
            holonomy[0],
            holonomy[1],
            100.0 * holonomy_drift
        ),
    )
}

fn singular_time() -> Verdict {
    // A perturbed constant map into S³ whose kernel gap collapses along the
    // flow near t = 0.18.
    let g = geometry(8, sphere(3));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let eta = smooth_random_field(&g.domain, 4, 1, &mut rng);
    let u0 = MapField::constant(&g.domain, &north(3))
        .axpy(0.4, &eta)
        .project(&g.target)
        .unwrap();
    let config = FlowConfig {
        alpha: 1.1,
        dt: 0.02,
        t_max: 0.2,
        gap_min: 5e-3,
        ..Default::default()
    };
    let traj = run_flow(&g, &config, &u0, None).unwrap();
    let singular = traj.events_of(EventKind::SingularTime).next().cloned();
    let restart = traj.events_of(EventKind::Restart).next().cloned();
    let (Some(singular), Some(restart)) = (singular, restart) else {
        return verdict(
            false,
            format!("no singular time and restart; outcome {:?}", traj.outcome),
        );
    };
    let (Some(before), Some(after)) = (restart.energy_before, restart.energy_after) else {
        return verdict(false, "restart event without energies".into());
    };
    let resumed = traj.final_state.step > restart.step && traj.final_state.psi.is_some();
    let invariants = homotopy_invariants(&g, &u0).unwrap()
        == homotopy_invariants(&g, &traj.final_state.u).unwrap();
    verdict(
        after < before && resumed && invariants,
        format!(
            "singular time at t = {:.2} (gap {:.2e}), restart lowers E^α {before:.6} → {after:.6}, flow resumed to step {} ({:?})",
            singular.time,
            singular.gap.unwrap_or(f64::NAN),
            traj.final_state.step,
            traj.outcome
        ),
    )
}

fn continuation() -> Verdict {
    let g = geometry(16, sphere(1));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u0 = perturbed(
        &g,
        &MapField::constant(&g.domain, &[1.0, 0.0]),
        0.3,
        2,
        &mut rng,
    );
    let config = FlowConfig {
        dt: 0.1,
        t_max: 20.0,
        ..Default::default()
    };
    let result = match alpha_continuation(&g, &config, &[1.2, 1.1, 1.05, 1.02], &u0, None, None) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let unit = result
        .trajectories
        .iter()
        .flat_map(|t| &t.rows)
        .all(|r| r.psi_l2.is_some_and(|n| (n - 1.0).abs() <= 1e-12))
        && result
            .stages
            .iter()
            .all(|s| s.psi_l2.is_some_and(|n| (n - 1.0).abs() <= 1e-12));
    let empty = result.blowup.as_ref().is_some_and(|b| b.is_empty())
        && result.stages.iter().all(|s| s.concentration.is_empty());
    let outcomes: Vec<String> = result
        .stages
        .iter()
        .map(|s| format!("{:?}", s.outcome))
        .collect();
    verdict(
        result.stages.len() == 4 && unit && empty,
        format!(
            "stages {}, concentration empty: {empty}, ‖ψ‖ = 1 throughout: {unit}",
            outcomes.join("/")
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 12] = [
        ("free Dirac spectrum", free_spectrum_exact),
        ("hermiticity and ± symmetry", hermitian_and_symmetric),
        ("constraint solver", constraint_solver),
        ("energy identity", energy_identity),
        ("monotonicity", monotonicity),
        ("stationary solution", stationary),
        ("winding convergence", winding_convergence),
        ("variational consistency", variational_consistency),
        ("curvature pairing", curvature_pairing),
        ("Lipschitz suite", lipschitz_suite),
        ("singular time and restart", singular_time),
        ("α-continuation", continuation),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        if !v.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<28} {} [{:.1} s] {}",
            k + 1,
            name,
            if v.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
