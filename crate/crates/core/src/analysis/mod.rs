//! Localised energies, concentration monitoring, discrete Sobolev norms and
//! homotopy invariants of maps into the supported targets.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dirac::{dirac_along_map, DiracError, TwistedSpinorField};
use crate::geometry::{Geometry, MapField, TargetKind};

type C = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("radius {radius:.4} is below two grid cells ({min:.4})")]
    RadiusTooSmall { radius: f64, min: f64 },
    #[error("angle increment {increment:.3} at node {node} is too large to resolve a winding")]
    AngleJumpTooLarge { node: usize, increment: f64 },
    #[error("discrete degree {value:.4} is not close to an integer")]
    DegreeNotNearInteger { value: f64 },
    #[error(transparent)]
    Dirac(#[from] DiracError),
}

/// Offsets `(d1, d2)` of the grid nodes within torus distance `radius`.
fn ball_offsets(geometry: &Geometry, radius: f64) -> Vec<(usize, usize)> {
    let d = &geometry.domain;
    let [h1, h2] = d.spacing();
    let (n1, n2) = (d.n1(), d.n2());
    let mut out = Vec::new();
    for a in 0..n1 {
        for b in 0..n2 {
            let x = (a.min(n1 - a)) as f64 * h1;
            let y = (b.min(n2 - b)) as f64 * h2;
            if x * x + y * y <= radius * radius * (1.0 + 1e-12) {
                out.push((a, b));
            }
        }
    }
    out
}

fn check_radius(geometry: &Geometry, radius: f64) -> Result<(), AnalysisError> {
    let [h1, h2] = geometry.domain.spacing();
    let min = 2.0 * h1.max(h2);
    if radius < min * (1.0 - 1e-12) {
        return Err(AnalysisError::RadiusTooSmall { radius, min });
    }
    Ok(())
}

/// `½ Σ_{|x − c| ≤ r} |∇u|² · cell_area` with torus distance.
pub fn local_energy(
    geometry: &Geometry,
    u: &MapField,
    center: usize,
    radius: f64,
) -> Result<f64, AnalysisError> {
    check_radius(geometry, radius)?;
    let density = geometry.gradient_density(u);
    Ok(
        ball_sum(geometry, &density, &ball_offsets(geometry, radius), center)
            * 0.5
            * geometry.cell_area(),
    )
}

fn ball_sum(
    geometry: &Geometry,
    density: &[f64],
    offsets: &[(usize, usize)],
    center: usize,
) -> f64 {
    let d = &geometry.domain;
    let (c1, c2) = d.grid_position(center);
    offsets
        .iter()
        .map(|&(a, b)| density[d.index((c1 + a) % d.n1(), (c2 + b) % d.n2())])
        .sum()
}

/// Local energies of every node at each radius: `[radius][node]`.
pub fn local_energies(
    geometry: &Geometry,
    u: &MapField,
    radii: &[f64],
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let density = geometry.gradient_density(u);
    radii
        .iter()
        .map(|&r| {
            check_radius(geometry, r)?;
            let offsets = ball_offsets(geometry, r);
            Ok((0..geometry.nodes())
                .map(|c| 0.5 * geometry.cell_area() * ball_sum(geometry, &density, &offsets, c))
                .collect())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub radii: Vec<f64>,
    pub threshold: f64,
    /// Nodes whose local energy reaches the threshold at every radius in
    /// every monitored state.
    pub flagged: Vec<usize>,
    /// Local energies of the last monitored state: `[radius][node]`.
    pub local_energies: Vec<Vec<f64>>,
}

impl ConcentrationReport {
    pub fn is_empty(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Default radius schedule `{8h, 4h, 2h}` with `h` the coarser spacing.
pub fn default_radii(geometry: &Geometry) -> Vec<f64> {
    let [h1, h2] = geometry.domain.spacing();
    let h = h1.max(h2);
    vec![8.0 * h, 4.0 * h, 2.0 * h]
}

/// Flags nodes whose local energy stays at or above `threshold` for every
/// radius and every state: the discrete `liminf` over shrinking balls.
pub fn concentration_monitor(
    geometry: &Geometry,
    states: &[&MapField],
    radii: &[f64],
    threshold: f64,
) -> Result<ConcentrationReport, AnalysisError> {
    let mut keep = vec![true; geometry.nodes()];
    let mut last = Vec::new();
    for u in states {
        let energies = local_energies(geometry, u, radii)?;
        for per_radius in &energies {
            for (k, &e) in keep.iter_mut().zip(per_radius) {
                *k &= e >= threshold;
            }
        }
        last = energies;
    }
    if states.is_empty() {
        keep.iter_mut().for_each(|k| *k = false);
    }
    Ok(ConcentrationReport {
        radii: radii.to_vec(),
        threshold,
        flagged: (0..keep.len()).filter(|&i| keep[i]).collect(),
        local_energies: last,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevNorms {
    pub w1p: f64,
    pub dirac_lp: f64,
    pub lp: f64,
}

fn lp_norm(values: &[C], stride: usize, p: f64, cell_area: f64) -> f64 {
    let sum: f64 = values
        .chunks(stride)
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().powf(p))
        .sum();
    (sum * cell_area).powf(1.0 / p)
}

/// `(‖ψ‖_{W^{1,p}}, ‖D̸ψ‖_{L^p}, ‖ψ‖_{L^p})` with spectral derivatives of the
/// ambient coefficients.
pub fn sobolev_diagnostic(
    geometry: &Geometry,
    u: &MapField,
    psi: &TwistedSpinorField,
    p: f64,
) -> Result<SobolevNorms, AnalysisError> {
    let q = psi.ambient_dim();
    let n = geometry.nodes();
    let h = geometry.cell_area();
    let shift = geometry.domain.spin().shift();
    let stride = 2 * q;
    let mut grads = [
        vec![C::new(0.0, 0.0); psi.values().len()],
        vec![C::new(0.0, 0.0); psi.values().len()],
    ];
    let mut buf = vec![C::new(0.0, 0.0); n];
    for s in 0..2 {
        for a in 0..q {
            for node in 0..n {
                buf[node] = psi.values()[(node * 2 + s) * q + a];
            }
            let d = geometry.spectral.derivatives_complex(&buf, shift);
            for (beta, db) in d.iter().enumerate() {
                for node in 0..n {
                    grads[beta][(node * 2 + s) * q + a] = db[node];
                }
            }
        }
    }
    let lp = lp_norm(psi.values(), stride, p, h);
    let g1 = lp_norm(&grads[0], stride, p, h);
    let g2 = lp_norm(&grads[1], stride, p, h);
    let w1p = (lp.powf(p) + g1.powf(p) + g2.powf(p)).powf(1.0 / p);
    let dpsi = dirac_along_map(geometry, u, psi)?;
    Ok(SobolevNorms {
        w1p,
        dirac_lp: lp_norm(dpsi.values(), stride, p, h),
        lp,
    })
}

/// Wraps an angle difference into `(−π, π]`.
fn wrap(delta: f64) -> f64 {
    let mut d = delta % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Winding numbers of the planar pair `(x, y) = (u^{o}, u^{o+1})` along both
/// generators. Every increment along every grid line must stay below `π/2`.
fn windings(geometry: &Geometry, u: &MapField, o: usize) -> Result<[i64; 2], AnalysisError> {
    let d = &geometry.domain;
    let angle = |node: usize| {
        let v = u.node(node);
        v[o + 1].atan2(v[o])
    };
    let mut out = [0i64; 2];
    for (axis, slot) in out.iter_mut().enumerate() {
        let (len, lines) = if axis == 0 {
            (d.n1(), d.n2())
        } else {
            (d.n2(), d.n1())
        };
        let mut first = None;
        for line in 0..lines {
            let mut total = 0.0;
            for step in 0..len {
                let (a, b) = if axis == 0 {
                    (d.index(step, line), d.index((step + 1) % len, line))
                } else {
                    (d.index(line, step), d.index(line, (step + 1) % len))
                };
                let inc = wrap(angle(b) - angle(a));
                if inc.abs() >= PI / 2.0 {
                    return Err(AnalysisError::AngleJumpTooLarge {
                        node: a,
                        increment: inc,
                    });
                }
                total += inc;
            }
            let w = (total / (2.0 * PI)).round() as i64;
            first.get_or_insert(w);
        }
        *slot = first.unwrap_or(0);
    }
    Ok(out)
}

/// Signed solid angle of the spherical triangle `(a, b, c)` on the unit sphere.
fn solid_angle(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let triple = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0]);
    let dot = |x: &[f64], y: &[f64]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    2.0 * triple.atan2(1.0 + dot(a, b) + dot(b, c) + dot(c, a))
}

/// Degree of a map into S² from the signed solid angles of the two triangles
/// in each grid cell.
fn sphere_degree(geometry: &Geometry, u: &MapField) -> Result<i64, AnalysisError> {
    let d = &geometry.domain;
    let unit = |node: usize| {
        let v = u.node(node);
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / r, v[1] / r, v[2] / r]
    };
    let mut total = 0.0;
    for i in 0..d.n1() {
        for j in 0..d.n2() {
            let a = unit(d.index(i, j));
            let b = unit(d.index((i + 1) % d.n1(), j));
            let c = unit(d.index((i + 1) % d.n1(), (j + 1) % d.n2()));
            let e = unit(d.index(i, (j + 1) % d.n2()));
            total += solid_angle(&a, &b, &c) + solid_angle(&a, &c, &e);
        }
    }
    let value = total / (4.0 * PI);
    if (value - value.round()).abs() > 0.1 {
        return Err(AnalysisError::DegreeNotNearInteger { value });
    }
    Ok(value.round() as i64)
}

/// Discrete homotopy invariants: winding numbers per circle factor and
/// generator for S¹ and circle products, the degree for S², and the empty
/// tuple for higher spheres (whose maps from the torus are all homotopic).
pub fn homotopy_invariants(geometry: &Geometry, u: &MapField) -> Result<Vec<i64>, AnalysisError> {
    match geometry.target.kind() {
        TargetKind::Sphere { dim: 1, .. } => Ok(windings(geometry, u, 0)?.to_vec()),
        TargetKind::Sphere { dim: 2, .. } => Ok(vec![sphere_degree(geometry, u)?]),
        TargetKind::Sphere { .. } => Ok(Vec::new()),
        TargetKind::Torus { factors, .. } => {
            let mut out = Vec::with_capacity(2 * factors);
            for f in 0..factors {
                out.extend(windings(geometry, u, 2 * f)?);
            }
            Ok(out)
        }
    }
}
