use std::f64::consts::PI;

use dhflow::analysis::{
    concentration_monitor, default_radii, homotopy_invariants, local_energies, local_energy,
    sobolev_diagnostic, AnalysisError,
};
use dhflow::dirac::TwistedSpinorField;
use dhflow::flow::dirichlet_energy;
use dhflow::geometry::{
    smooth_random_field, Geometry, MapField, SpinStructure, TargetManifold, TorusDomain,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geometry(n: usize, target: TargetManifold) -> Geometry {
    Geometry::new(
        TorusDomain::square(n, SpinStructure::TRIVIAL).unwrap(),
        target,
    )
}

/// A degree ±1 map into S² supported in the disc of radius `rho` around the
/// centre of the torus: the polar angle falls linearly from π to 0.
fn bubble(g: &Geometry, rho: f64, flip: bool) -> MapField {
    let [l1, l2] = g.domain.lengths();
    MapField::from_fn(&g.domain, 3, |[x, y]| {
        let (dx, dy) = (x - 0.5 * l1, if flip { 0.5 * l2 - y } else { y - 0.5 * l2 });
        let r = dx.hypot(dy);
        let theta = if r < rho { PI * (1.0 - r / rho) } else { 0.0 };
        let phi = dy.atan2(dx);
        vec![
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        ]
    })
}

fn noisy(g: &Geometry, u: &MapField, amplitude: f64, seed: u64) -> MapField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = smooth_random_field(&g.domain, g.q(), 3, &mut rng);
    u.axpy(amplitude, &eta).project(&g.target).unwrap()
}

#[test]
fn local_energy_over_the_whole_torus_is_the_dirichlet_energy() {
    let g = geometry(16, TargetManifold::sphere(2, 1.0).unwrap());
    let u = noisy(&g, &bubble(&g, 2.0, false), 0.05, 1);
    let total = dirichlet_energy(&g, &u);
    for center in [0, 37, 255] {
        let e = local_energy(&g, &u, center, 10.0).unwrap();
        assert!((e - total).abs() <= 1e-12 * total);
    }
    // Balls grow with the radius.
    let radii = [3.0, 1.5, 0.8];
    let energies = local_energies(&g, &u, &radii).unwrap();
    for node in 0..g.nodes() {
        assert!(energies[0][node] >= energies[1][node] && energies[1][node] >= energies[2][node]);
        assert_eq!(energies[1][node], local_energy(&g, &u, node, 1.5).unwrap());
    }
}

#[test]
fn radii_below_two_cells_are_rejected() {
    let g = geometry(16, TargetManifold::sphere(1, 1.0).unwrap());
    let u = MapField::winding(&g.domain, [1, 0], 1.0);
    let h = g.domain.spacing()[0];
    assert!(matches!(
        local_energy(&g, &u, 0, h),
        Err(AnalysisError::RadiusTooSmall { .. })
    ));
    assert!(local_energy(&g, &u, 0, 2.0 * h).is_ok());
    assert!(concentration_monitor(&g, &[&u], &[4.0 * h, h], 1.0).is_err());
}

#[test]
fn winding_numbers_of_circle_maps() {
    let g = geometry(32, TargetManifold::sphere(1, 1.0).unwrap());
    for k in [[0, 0], [1, 0], [0, -2], [3, 1]] {
        let u = MapField::winding(&g.domain, k, 1.0);
        assert_eq!(homotopy_invariants(&g, &u).unwrap(), k.to_vec());
        let v = noisy(&g, &u, 0.01, 2);
        assert_eq!(homotopy_invariants(&g, &v).unwrap(), k.to_vec());
    }
    // Under-resolved windings are refused instead of miscounted.
    let g = geometry(16, TargetManifold::sphere(1, 1.0).unwrap());
    let u = MapField::winding(&g.domain, [5, 0], 1.0);
    assert!(matches!(
        homotopy_invariants(&g, &u),
        Err(AnalysisError::AngleJumpTooLarge { .. })
    ));
}

#[test]
fn windings_per_circle_factor() {
    let g = geometry(16, TargetManifold::torus(2, 0.75).unwrap());
    let a = MapField::winding(&g.domain, [1, -1], 0.75);
    let b = MapField::winding(&g.domain, [0, 2], 0.75);
    let values: Vec<f64> = (0..g.nodes())
        .flat_map(|i| [a.node(i)[0], a.node(i)[1], b.node(i)[0], b.node(i)[1]])
        .collect();
    let u = MapField::from_values(4, values);
    assert_eq!(homotopy_invariants(&g, &u).unwrap(), vec![1, -1, 0, 2]);
    assert_eq!(
        homotopy_invariants(&g, &noisy(&g, &u, 0.01, 3)).unwrap(),
        vec![1, -1, 0, 2]
    );
}

#[test]
fn degree_of_sphere_maps() {
    let g = geometry(32, TargetManifold::sphere(2, 1.0).unwrap());
    let c = MapField::constant(&g.domain, &[0.0, 0.0, 1.0]);
    assert_eq!(homotopy_invariants(&g, &c).unwrap(), vec![0]);
    let u = bubble(&g, 2.0, false);
    let d = homotopy_invariants(&g, &u).unwrap();
    assert_eq!(d[0].abs(), 1);
    assert_eq!(
        homotopy_invariants(&g, &bubble(&g, 2.0, true)).unwrap(),
        vec![-d[0]]
    );
    assert_eq!(homotopy_invariants(&g, &noisy(&g, &u, 0.01, 4)).unwrap(), d);
    let g3 = geometry(8, TargetManifold::sphere(3, 1.0).unwrap());
    let c3 = MapField::constant(&g3.domain, &[0.0, 0.0, 0.0, 1.0]);
    assert!(homotopy_invariants(&g3, &c3).unwrap().is_empty());
}

#[test]
fn concentration_is_flagged_only_for_bubbles() {
    let g = geometry(32, TargetManifold::sphere(2, 1.0).unwrap());
    let radii = default_radii(&g);
    let h = g.domain.spacing()[0];
    assert_eq!(radii, vec![8.0 * h, 4.0 * h, 2.0 * h]);
    let u = bubble(&g, 4.0 * h, false);
    let report = concentration_monitor(&g, &[&u], &radii, 1.0).unwrap();
    assert!(!report.is_empty());
    let centre = g.domain.index(16, 16);
    assert!(report.flagged.contains(&centre));
    for &node in &report.flagged {
        assert!(g.domain.torus_distance(node, centre) <= 6.0 * h + 1e-12);
    }
    assert_eq!(report.local_energies.len(), radii.len());
    let c = MapField::constant(&g.domain, &[0.0, 0.0, 1.0]);
    assert!(concentration_monitor(&g, &[&c], &radii, 1.0)
        .unwrap()
        .is_empty());
    // A smooth map with spread-out energy is not flagged.
    let w = bubble(&g, 3.0, false);
    assert!(concentration_monitor(&g, &[&w], &radii, 1.0)
        .unwrap()
        .is_empty());
    // Every monitored state must concentrate for a node to be flagged.
    assert!(concentration_monitor(&g, &[&u, &c], &radii, 1.0)
        .unwrap()
        .is_empty());
}

#[test]
fn sobolev_norms_of_a_parallel_spinor() {
    // Constant spinor along a constant circle map: no derivative and no
    // Dirac term, so the W^{1,p} norm reduces to the L^p norm.
    let g = geometry(8, TargetManifold::sphere(1, 1.0).unwrap());
    let u = MapField::constant(&g.domain, &[1.0, 0.0]);
    let mut values = vec![Complex64::new(0.0, 0.0); g.nodes() * 4];
    for node in 0..g.nodes() {
        for s in 0..2 {
            values[(node * 2 + s) * 2 + 1] = Complex64::new(1.0, 0.0);
        }
    }
    let psi = TwistedSpinorField::from_values(2, values);
    let p = 4.0;
    let norms = sobolev_diagnostic(&g, &u, &psi, p).unwrap();
    let expect = (g.domain.area() * 2f64.powf(p / 2.0)).powf(1.0 / p);
    assert!((norms.lp - expect).abs() <= 1e-12 * expect);
    assert!((norms.w1p - norms.lp).abs() <= 1e-12 * expect);
    assert!(norms.dirac_lp <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 12,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn sobolev_norms_are_ordered(seed in any::<u64>(), p in 2.0..6.0f64, amplitude in 0.0..0.3f64) {
        let g = geometry(12, TargetManifold::sphere(2, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = MapField::constant(&g.domain, &g.target.random_point(&mut rng));
        let u = base
            .axpy(amplitude, &smooth_random_field(&g.domain, 3, 2, &mut rng))
            .project(&g.target)
            .unwrap();
        let psi = TwistedSpinorField::smooth_random(&g, &u, 2, &mut rng);
        let n = sobolev_diagnostic(&g, &u, &psi, p).unwrap();
        prop_assert!(n.lp.is_finite() && n.w1p.is_finite() && n.dirac_lp.is_finite());
        prop_assert!(n.lp > 0.0 && n.w1p >= n.lp);
        prop_assert!(n.w1p / (n.dirac_lp + n.lp) < 1e3);
        // Positive homogeneity in ψ.
        let scaled = TwistedSpinorField::from_values(3, psi.values().iter().map(|z| z * 2.5).collect());
        let m = sobolev_diagnostic(&g, &u, &scaled, p).unwrap();
        prop_assert!((m.w1p - 2.5 * n.w1p).abs() <= 1e-10 * m.w1p);
        prop_assert!((m.dirac_lp - 2.5 * n.dirac_lp).abs() <= 1e-10 * m.w1p);
    }

    #[test]
    fn local_energy_is_translation_covariant(seed in any::<u64>(), shift in 0usize..12, radius in 1.1..3.0f64) {
        let g = geometry(12, TargetManifold::sphere(1, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = MapField::constant(&g.domain, &[1.0, 0.0])
            .axpy(0.3, &smooth_random_field(&g.domain, 2, 2, &mut rng))
            .project(&g.target)
            .unwrap();
        let d = &g.domain;
        let values: Vec<f64> = (0..g.nodes())
            .flat_map(|node| {
                let (i, j) = d.grid_position(node);
                u.node(d.index((i + shift) % d.n1(), j)).to_vec()
            })
            .collect();
        let v = MapField::from_values(2, values);
        for node in [0, 5, 77] {
            let (i, j) = d.grid_position(node);
            let moved = d.index((i + shift) % d.n1(), j);
            let a = local_energy(&g, &v, node, radius).unwrap();
            let b = local_energy(&g, &u, moved, radius).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b));
        }
    }
}
