use dhflow::analysis::homotopy_invariants;
use dhflow::dirac::{free_spectral_radius, TwistedSpinorField};
use dhflow::flow::{
    curvature_pairing_check, dirichlet_energy, el_residual, energy_alpha, f1_term, f2_term,
    map_rhs, run_flow, validate_schedule, variational_consistency_check, Flow, FlowConfig,
    FlowError, Outcome, SpinorMode,
};
use dhflow::geometry::{
    smooth_random_field, Geometry, MapField, SpinStructure, TargetManifold, TorusDomain,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geometry(n: usize, target: TargetManifold) -> Geometry {
    Geometry::new(
        TorusDomain::square(n, SpinStructure::TRIVIAL).unwrap(),
        target,
    )
}

fn perturbed(g: &Geometry, base: &MapField, amplitude: f64, seed: u64) -> MapField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = smooth_random_field(&g.domain, g.q(), 2, &mut rng);
    base.axpy(amplitude, &eta).project(&g.target).unwrap()
}

fn north(g: &Geometry) -> MapField {
    let mut p = vec![0.0; g.q()];
    p[g.q() - 1] = g.target.radius();
    MapField::constant(&g.domain, &p)
}

#[test]
fn harmonic_map_flow_is_recovered_at_alpha_one() {
    // For the sphere of radius r the projection is π(z) = r z/|z|, and
    // −∂²π(∇u, ∇u) = r [2 g (z·g) + z |g|²]/|z|³ − 3 r z (z·g)²/|z|⁵ per
    // direction g. On exactly tangent gradients this is the familiar
    // |∇u|² u / r², but discrete gradients are tangent only up to aliasing.
    let r = 1.5;
    let g = geometry(16, TargetManifold::sphere(2, r).unwrap());
    let u = perturbed(&g, &north(&g), 0.4, 1);
    let rhs = map_rhs(&g, &u, None, 1.0).unwrap();
    let q = g.q();
    let comps: Vec<Vec<f64>> = (0..q).map(|a| u.component(a)).collect();
    let lap: Vec<Vec<f64>> = comps.iter().map(|c| g.spectral.laplacian(c)).collect();
    let grad: Vec<[Vec<f64>; 2]> = comps.iter().map(|c| g.spectral.gradient(c)).collect();
    let f1 = f1_term(&g, &u).unwrap();
    let density = g.gradient_density(&u);
    for node in 0..g.nodes() {
        let z = u.node(node);
        let zz = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut tension = vec![0.0; q];
        for dir in 0..2 {
            let gv: Vec<f64> = (0..q).map(|a| grad[a][dir][node]).collect();
            let zg: f64 = z.iter().zip(&gv).map(|(a, b)| a * b).sum();
            let gg: f64 = gv.iter().map(|x| x * x).sum();
            for a in 0..q {
                tension[a] += r * (2.0 * gv[a] * zg + z[a] * gg) / zz.powi(3)
                    - 3.0 * r * z[a] * zg * zg / zz.powi(5);
            }
        }
        for a in 0..q {
            assert!((f1.node(node)[a] - tension[a]).abs() <= 1e-10);
            assert!((rhs.node(node)[a] - lap[a][node] - tension[a]).abs() <= 1e-10);
            // The tangent-only form agrees up to aliasing.
            assert!(
                (tension[a] - density[node] * z[a] / (r * r)).abs() <= 1e-2 * (1.0 + density[node])
            );
        }
    }
    // A vanishing spinor contributes nothing.
    let zero = TwistedSpinorField::zeros(g.nodes(), q);
    let with_zero = map_rhs(&g, &u, Some(&zero), 1.0).unwrap();
    assert_eq!(with_zero.values(), rhs.values());
    assert!(f2_term(&g, &u, &zero)
        .unwrap()
        .values()
        .iter()
        .all(|&x| x == 0.0));
}

#[test]
fn energies_of_constant_and_winding_maps() {
    let g = geometry(16, TargetManifold::sphere(1, 1.0).unwrap());
    let area = g.domain.area();
    let c = MapField::constant(&g.domain, &[1.0, 0.0]);
    assert!(dirichlet_energy(&g, &c).abs() <= 1e-14);
    assert!((energy_alpha(&g, &c, 1.3) - 0.5 * area).abs() <= 1e-12);
    let w = MapField::winding(&g.domain, [1, 1], 1.0);
    assert!((dirichlet_energy(&g, &w) - area).abs() <= 1e-10);
    assert!((energy_alpha(&g, &w, 1.2) - 0.5 * area * 3f64.powf(1.2)).abs() <= 1e-9);
    let (map, spinor) = el_residual(&g, &w, None, 1.2).unwrap();
    assert!(map <= 1e-10 && spinor == 0.0);
}

#[test]
fn coupled_flow_keeps_the_constraint() {
    let g = geometry(12, TargetManifold::sphere(1, 1.0).unwrap());
    let u0 = perturbed(&g, &north(&g), 0.3, 5);
    let config = FlowConfig {
        alpha: 1.1,
        dt: 0.05,
        t_max: 1.0,
        sample_stride: 1,
        ..Default::default()
    };
    let traj = run_flow(&g, &config, &u0, None).unwrap();
    assert_eq!(traj.outcome, Outcome::TimeLimit);
    let lambda = free_spectral_radius(&g);
    let h = g.cell_area();
    assert!(traj.samples.len() > 10);
    for s in &traj.samples {
        let psi = s.psi.as_ref().unwrap();
        assert!((psi.l2_norm(h) - 1.0).abs() <= 1e-12);
        assert!(psi.tangency_residual(&g, &s.u) <= 1e-9);
        assert!(s.u.target_residual(&g.target) <= 1e-9);
        assert!(s.diagnostics.spinor_residual.unwrap() <= lambda * 1e-8);
    }
    assert!(traj.max_energy_increase() <= 1e-10 * traj.rows[0].energy_alpha);
}

#[test]
fn windings_are_preserved_along_the_flow() {
    let g = geometry(16, TargetManifold::torus(1, 1.0).unwrap());
    let u0 = perturbed(&g, &MapField::winding(&g.domain, [2, -1], 1.0), 0.05, 7);
    let config = FlowConfig {
        alpha: 1.05,
        dt: 0.02,
        t_max: 0.5,
        spinor: SpinorMode::Disabled,
        sample_stride: 1,
        ..Default::default()
    };
    let traj = run_flow(&g, &config, &u0, None).unwrap();
    let start = homotopy_invariants(&g, &u0).unwrap();
    assert_eq!(start, vec![2, -1]);
    for s in &traj.samples {
        assert_eq!(homotopy_invariants(&g, &s.u).unwrap(), start);
    }
}

#[test]
fn stationary_endpoint_has_small_residual() {
    let g = geometry(16, TargetManifold::sphere(1, 1.0).unwrap());
    let u0 = perturbed(&g, &MapField::winding(&g.domain, [1, 0], 1.0), 0.1, 3);
    let config = FlowConfig {
        alpha: 1.0,
        dt: 0.05,
        t_max: 50.0,
        spinor: SpinorMode::Disabled,
        ..Default::default()
    };
    let flow = Flow::new(g.clone(), config.clone()).unwrap();
    let traj = run_flow(&g, &config, &u0, None).unwrap();
    assert_eq!(traj.outcome, Outcome::Stationary);
    let (map, _) = el_residual(&g, &traj.final_state.u, None, 1.0).unwrap();
    assert!(map * map <= 4.0 * flow.stationary_tol());
}

#[test]
fn runs_are_deterministic() {
    let g = geometry(8, TargetManifold::sphere(1, 1.0).unwrap());
    let u0 = perturbed(&g, &north(&g), 0.3, 11);
    let config = FlowConfig {
        dt: 0.05,
        t_max: 0.5,
        ..Default::default()
    };
    let a = run_flow(&g, &config, &u0, None).unwrap();
    let b = run_flow(&g, &config, &u0, None).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.final_state.u.values(), b.final_state.u.values());
}

#[test]
fn regular_states_are_not_restarted() {
    let g = geometry(8, TargetManifold::sphere(1, 1.0).unwrap());
    let mut flow = Flow::new(g.clone(), FlowConfig::default()).unwrap();
    let state = flow.initial_state(&north(&g), None).unwrap();
    assert!(flow.is_regular(&state));
    let r = flow
        .restart_map(&state, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    assert_eq!(r.attempts, 0);
    assert_eq!(r.state.u.values(), state.u.values());
}

#[test]
fn non_minimal_start_is_singular() {
    // Constant maps into S² have a four-dimensional kernel: the coupled flow
    // cannot start there, and the restarts keep the energy from increasing.
    let g = geometry(8, TargetManifold::sphere(2, 1.0).unwrap());
    let mut flow = Flow::new(g.clone(), FlowConfig::default()).unwrap();
    let state = flow.initial_state(&north(&g), None).unwrap();
    assert!(!flow.is_regular(&state));
    assert_eq!(state.diagnostics.kernel_dim, Some(4));
}

#[test]
fn invalid_configurations_are_rejected() {
    let g = geometry(8, TargetManifold::sphere(1, 1.0).unwrap());
    for config in [
        FlowConfig {
            alpha: 0.9,
            ..Default::default()
        },
        FlowConfig {
            dt: 0.0,
            ..Default::default()
        },
        FlowConfig {
            t_max: f64::NAN,
            ..Default::default()
        },
        FlowConfig {
            gap_min: -1.0,
            ..Default::default()
        },
    ] {
        assert!(matches!(
            Flow::new(g.clone(), config),
            Err(FlowError::InvalidConfig(_))
        ));
    }
}

#[test]
fn schedules_must_decrease_towards_one() {
    assert!(validate_schedule(&[1.2, 1.1, 1.05, 1.02]).is_ok());
    assert!(validate_schedule(&[1.2, 1.0]).is_ok());
    assert!(validate_schedule(&[1.1]).is_ok());
    for bad in [
        &[][..],
        &[1.1, 1.2],
        &[1.1, 1.1],
        &[1.0, 1.0],
        &[1.0, 0.9],
        &[0.9],
        &[1.1, f64::NAN],
    ] {
        assert!(validate_schedule(bad).is_err(), "{bad:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 8,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn energy_never_increases(seed in any::<u64>(), alpha in 1.0..1.4f64, amplitude in 0.05..0.3f64) {
        let g = geometry(8, TargetManifold::sphere(2, 1.0).unwrap());
        let u0 = perturbed(&g, &north(&g), amplitude, seed);
        let config = FlowConfig {
            alpha,
            dt: 0.01,
            t_max: 0.2,
            spinor: SpinorMode::Disabled,
            ..Default::default()
        };
        let traj = run_flow(&g, &config, &u0, None).unwrap();
        let tol = 1e-10 * traj.rows[0].energy_alpha;
        prop_assert!(traj.max_energy_increase() <= tol);
        // First-order energy identity: the ledger residual is O(dt).
        let last = traj.ledger.last().unwrap();
        prop_assert!(last.residual.abs() <= 0.05 * (traj.rows[0].energy_alpha - last.energy).max(1e-12) + 1e-9);
    }

    #[test]
    fn first_variation_matches_rhs(seed in any::<u64>(), alpha in 1.0..1.5f64, with_spinor in any::<bool>()) {
        let g = geometry(24, TargetManifold::sphere(2, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = g.target.random_point(&mut rng);
        let u = MapField::constant(&g.domain, &p)
            .axpy(0.2, &smooth_random_field(&g.domain, 3, 1, &mut rng))
            .project(&g.target)
            .unwrap();
        let psi = TwistedSpinorField::smooth_random(&g, &u, 1, &mut rng);
        let eta = smooth_random_field(&g.domain, 3, 1, &mut rng);
        let check = variational_consistency_check(&g, &u, with_spinor.then_some(&psi), alpha, &eta, 1e-3).unwrap();
        prop_assert!(check.relative_error <= 1e-4, "{:?}", check);
    }

    #[test]
    fn curvature_pairing_identity(seed in any::<u64>(), dim in 2usize..=3) {
        let g = geometry(12, TargetManifold::sphere(dim, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = g.target.random_point(&mut rng);
        let u = MapField::constant(&g.domain, &p)
            .axpy(0.3, &smooth_random_field(&g.domain, g.q(), 2, &mut rng))
            .project(&g.target)
            .unwrap();
        let psi = TwistedSpinorField::smooth_random(&g, &u, 2, &mut rng);
        let v = smooth_random_field(&g.domain, g.q(), 2, &mut rng);
        let check = curvature_pairing_check(&g, &u, &psi, &v, 1e-4).unwrap();
        prop_assert!(check.relative_error <= 1e-6, "{:?}", check);
    }
}
