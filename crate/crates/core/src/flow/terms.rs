//! Right-hand side of the map equation, energies and residuals.

use serde::Serialize;

use super::FlowError;
use crate::dirac::{
    assemble_operator_with, free_dirac_raw, weighted_inner, weighted_norm, Assembly,
    TwistedSpinorField,
};
use crate::geometry::{Geometry, MapField};

/// Spectral derivatives of every ambient component, laid out `[node * q + A]`.
struct Derivatives {
    grad: [Vec<f64>; 2],
    hess: [Vec<f64>; 3],
    lap: Vec<f64>,
    density: Vec<f64>,
}

fn derivatives(geometry: &Geometry, u: &MapField) -> Derivatives {
    let q = u.ambient_dim();
    let n = geometry.nodes();
    let mut grad = [vec![0.0; n * q], vec![0.0; n * q]];
    let mut hess = [vec![0.0; n * q], vec![0.0; n * q], vec![0.0; n * q]];
    let mut lap = vec![0.0; n * q];
    for a in 0..q {
        let comp = u.component(a);
        let g = geometry.spectral.gradient(&comp);
        let h = geometry.spectral.second_derivatives(&comp);
        let l = geometry.spectral.laplacian(&comp);
        for i in 0..n {
            grad[0][i * q + a] = g[0][i];
            grad[1][i * q + a] = g[1][i];
            for k in 0..3 {
                hess[k][i * q + a] = h[k][i];
            }
            lap[i * q + a] = l[i];
        }
    }
    let density = (0..n)
        .map(|i| {
            (0..q)
                .map(|a| grad[0][i * q + a].powi(2) + grad[1][i * q + a].powi(2))
                .sum()
        })
        .collect();
    Derivatives {
        grad,
        hess,
        lap,
        density,
    }
}

fn f1_from(geometry: &Geometry, u: &MapField, d: &Derivatives) -> Result<Vec<f64>, FlowError> {
    let q = geometry.q();
    let mut out = vec![0.0; geometry.nodes() * q];
    let mut h = vec![0.0; q * q * q];
    for node in 0..geometry.nodes() {
        geometry.target.hessian_into(u.node(node), &mut h)?;
        let r = node * q..(node + 1) * q;
        let (g1, g2) = (&d.grad[0][r.clone()], &d.grad[1][r]);
        for a in 0..q {
            let mut s = 0.0;
            for b in 0..q {
                for c in 0..q {
                    s += h[(a * q + b) * q + c] * (g1[b] * g1[c] + g2[b] * g2[c]);
                }
            }
            out[node * q + a] = -s;
        }
    }
    Ok(out)
}

/// `F1^A = −π^A_{BC}(u)⟨∇u^B, ∇u^C⟩`.
pub fn f1_term(geometry: &Geometry, u: &MapField) -> Result<MapField, FlowError> {
    let d = derivatives(geometry, u);
    Ok(MapField::from_values(
        geometry.q(),
        f1_from(geometry, u, &d)?,
    ))
}

/// The curvature source of the map equation,
/// `F2^A = −P^A_B π^C_{BD} Re⟨ψ^D, π^C_{EF} ∇u^E · ψ^F⟩`.
///
/// The contraction `π^C_{EF} ∇u^E · ψ^F` is the normal part of the free Dirac
/// operator applied to the tangent spinor `ψ`, and it is evaluated in that
/// form. This makes `−2⟨F2, v⟩` the exact directional derivative of
/// `⟨ψ, D̸^{π∘u} ψ⟩` for the discrete operator.
pub fn f2_term(
    geometry: &Geometry,
    u: &MapField,
    psi: &TwistedSpinorField,
) -> Result<MapField, FlowError> {
    let q = geometry.q();
    let p = u.project(&geometry.target)?;
    let dpsi = free_dirac_raw(geometry, psi.values(), q);
    let mut out = vec![0.0; geometry.nodes() * q];
    let mut h = vec![0.0; q * q * q];
    let mut proj = vec![0.0; q * q];
    let mut k = vec![0.0; q];
    for node in 0..geometry.nodes() {
        let pn = p.node(node);
        geometry.target.hessian_into(pn, &mut h)?;
        geometry.target.jacobian_into(pn, &mut proj)?;
        let s0 = psi.coefficients(node, 0);
        let s1 = psi.coefficients(node, 1);
        let d0 = &dpsi[(node * 2) * q..(node * 2 + 1) * q];
        let d1 = &dpsi[(node * 2 + 1) * q..(node * 2 + 2) * q];
        for c in 0..q {
            let mut s = 0.0;
            for a in 0..q {
                for b in 0..q {
                    let coeff = h[(a * q + b) * q + c];
                    if coeff != 0.0 {
                        s += coeff * (s0[b].conj() * d0[a] + s1[b].conj() * d1[a]).re;
                    }
                }
            }
            k[c] = s;
        }
        for a in 0..q {
            out[node * q + a] = -(0..q).map(|c| proj[a * q + c] * k[c]).sum::<f64>();
        }
    }
    Ok(MapField::from_values(q, out))
}

/// `∂_t u = Δu + 2(α−1) ∇²_{βγ}u^B ∇_βu^B ∇_γu / (1+|∇u|²) + F1 + F2 / (α(1+|∇u|²)^{α−1})`.
///
/// With `psi = None` the spinor source is omitted; at `α = 1` the coupling term
/// vanishes identically and the harmonic map flow is recovered.
pub fn map_rhs(
    geometry: &Geometry,
    u: &MapField,
    psi: Option<&TwistedSpinorField>,
    alpha: f64,
) -> Result<MapField, FlowError> {
    let q = geometry.q();
    let d = derivatives(geometry, u);
    let mut out = d.lap.clone();
    for (o, f) in out.iter_mut().zip(f1_from(geometry, u, &d)?) {
        *o += f;
    }
    if alpha != 1.0 {
        for node in 0..geometry.nodes() {
            let r = node * q..(node + 1) * q;
            let g = [&d.grad[0][r.clone()], &d.grad[1][r.clone()]];
            let h = [&d.hess[0][r.clone()], &d.hess[1][r.clone()], &d.hess[2][r]];
            let hg = |beta: usize, gamma: usize| {
                let hb = h[beta + gamma];
                (0..q).map(|b| hb[b] * g[beta][b]).sum::<f64>()
            };
            let c = [hg(0, 0) + hg(1, 0), hg(0, 1) + hg(1, 1)];
            let scale = 2.0 * (alpha - 1.0) / (1.0 + d.density[node]);
            for a in 0..q {
                out[node * q + a] += scale * (c[0] * g[0][a] + c[1] * g[1][a]);
            }
        }
    }
    if let Some(psi) = psi {
        let f2 = f2_term(geometry, u, psi)?;
        for node in 0..geometry.nodes() {
            let inv = 1.0 / (alpha * (1.0 + d.density[node]).powf(alpha - 1.0));
            for a in 0..q {
                out[node * q + a] += inv * f2.node(node)[a];
            }
        }
    }
    Ok(MapField::from_values(q, out))
}

/// `E^α(u) = ½ Σ (1+|∇u|²)^α · cell_area`.
pub fn energy_alpha(geometry: &Geometry, u: &MapField, alpha: f64) -> f64 {
    let h = geometry.cell_area();
    0.5 * h
        * geometry
            .gradient_density(u)
            .iter()
            .map(|g| (1.0 + g).powf(alpha))
            .sum::<f64>()
}

/// `E(u) = ½ Σ |∇u|² · cell_area`.
pub fn dirichlet_energy(geometry: &Geometry, u: &MapField) -> f64 {
    0.5 * geometry.cell_area() * geometry.gradient_density(u).iter().sum::<f64>()
}

/// `L^α(u, ψ) = E^α(u) + ½ Re⟨ψ, D̸^{π∘u} ψ⟩`.
pub fn action(
    geometry: &Geometry,
    u: &MapField,
    psi: &TwistedSpinorField,
    alpha: f64,
) -> Result<f64, FlowError> {
    Ok(energy_alpha(geometry, u, alpha) + 0.5 * spinor_pairing(geometry, u, psi)?)
}

/// `Re⟨Πψ, ∂̸Πψ⟩_{L²}` with `Π` the tangent projection along `π∘u`. For a
/// tangent spinor this is `Re⟨ψ, D̸^{π∘u} ψ⟩`.
pub(crate) fn spinor_pairing(
    geometry: &Geometry,
    u: &MapField,
    psi: &TwistedSpinorField,
) -> Result<f64, FlowError> {
    let p = u.project(&geometry.target)?;
    let mut projected = psi.clone();
    projected.project_tangent(geometry, &p);
    let dpsi = free_dirac_raw(geometry, projected.values(), geometry.q());
    Ok(weighted_inner(projected.values(), &dpsi, geometry.cell_area()).re)
}

/// `(1+|∇u|²)^{α−1}` at every node.
pub(crate) fn weight(geometry: &Geometry, u: &MapField, alpha: f64) -> Vec<f64> {
    geometry
        .gradient_density(u)
        .iter()
        .map(|g| (1.0 + g).powf(alpha - 1.0))
        .collect()
}

/// Weighted L² norm `‖w · f‖` of a map-shaped field.
pub(crate) fn weighted_field_norm(geometry: &Geometry, w: &[f64], f: &MapField) -> f64 {
    let s: f64 = (0..geometry.nodes())
        .map(|i| w[i] * w[i] * f.node(i).iter().map(|x| x * x).sum::<f64>())
        .sum();
    (s * geometry.cell_area()).sqrt()
}

/// `(‖(1+|∇u|²)^{α−1} ∂_t u‖_{L²}, ‖D̸^{π∘u} ψ‖_{L²})` at a state.
pub fn el_residual(
    geometry: &Geometry,
    u: &MapField,
    psi: Option<&TwistedSpinorField>,
    alpha: f64,
) -> Result<(f64, f64), FlowError> {
    let rhs = map_rhs(geometry, u, psi, alpha)?;
    let map = weighted_field_norm(geometry, &weight(geometry, u, alpha), &rhs);
    let spinor = match psi {
        Some(psi) => {
            let op = assemble_operator_with(geometry, u, Assembly::MatrixFree)?;
            weighted_norm(&op.apply(psi.values()), geometry.cell_area())
        }
        None => 0.0,
    };
    Ok((map, spinor))
}

/// `Σ w |f|² · cell_area`.
pub(crate) fn weighted_square(geometry: &Geometry, w: Option<&[f64]>, f: &MapField) -> f64 {
    let s: f64 = (0..geometry.nodes())
        .map(|i| w.map_or(1.0, |w| w[i]) * f.node(i).iter().map(|x| x * x).sum::<f64>())
        .sum();
    s * geometry.cell_area()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariationCheck {
    /// Value predicted by the right-hand side.
    pub analytic: f64,
    /// Central finite difference.
    pub finite_difference: f64,
    pub relative_error: f64,
}

impl VariationCheck {
    fn new(analytic: f64, finite_difference: f64) -> Self {
        let scale = analytic.abs().max(finite_difference.abs());
        let relative_error = if scale == 0.0 {
            0.0
        } else {
            (analytic - finite_difference).abs() / scale
        };
        Self {
            analytic,
            finite_difference,
            relative_error,
        }
    }
}

/// Tangent part of `v` along `u`.
fn tangent_part(geometry: &Geometry, u: &MapField, v: &MapField) -> Result<MapField, FlowError> {
    let q = geometry.q();
    let p = u.project(&geometry.target)?;
    let mut out = vec![0.0; v.values().len()];
    let mut proj = vec![0.0; q * q];
    for node in 0..geometry.nodes() {
        geometry.target.jacobian_into(p.node(node), &mut proj)?;
        let x = v.node(node);
        for a in 0..q {
            out[node * q + a] = (0..q).map(|b| proj[a * q + b] * x[b]).sum();
        }
    }
    Ok(MapField::from_values(q, out))
}

/// Compares `−α⟨(1+|∇u|²)^{α−1} ∂_t u, Pη⟩` with the central difference of
/// `t ↦ E^α(π(u+tη)) + ½⟨Π_tψ, D̸^{π(u+tη)} Π_tψ⟩`, where `Π_t` is the tangent
/// projection along the varied map.
pub fn variational_consistency_check(
    geometry: &Geometry,
    u: &MapField,
    psi: Option<&TwistedSpinorField>,
    alpha: f64,
    direction: &MapField,
    fd_step: f64,
) -> Result<VariationCheck, FlowError> {
    let rhs = map_rhs(geometry, u, psi, alpha)?;
    let w = weight(geometry, u, alpha);
    let eta = tangent_part(geometry, u, direction)?;
    let h = geometry.cell_area();
    let pairing: f64 = (0..geometry.nodes())
        .map(|i| {
            w[i] * rhs
                .node(i)
                .iter()
                .zip(eta.node(i))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum::<f64>()
        * h;
    let lagrangian = |t: f64| -> Result<f64, FlowError> {
        let moved = u.axpy(t, direction).project(&geometry.target)?;
        let mut value = energy_alpha(geometry, &moved, alpha);
        if let Some(psi) = psi {
            let mut projected = psi.clone();
            projected.project_tangent(geometry, &moved);
            value += 0.5 * spinor_pairing(geometry, &moved, &projected)?;
        }
        Ok(value)
    };
    let fd = (lagrangian(fd_step)? - lagrangian(-fd_step)?) / (2.0 * fd_step);
    Ok(VariationCheck::new(-alpha * pairing, fd))
}

/// Compares the central difference of `t ↦ ⟨ψ, D̸^{π(u+tv)} ψ⟩` (fixed `ψ`)
/// with `−2⟨F2(u, ψ), v⟩`.
pub fn curvature_pairing_check(
    geometry: &Geometry,
    u: &MapField,
    psi: &TwistedSpinorField,
    v: &MapField,
    fd_step: f64,
) -> Result<VariationCheck, FlowError> {
    let f2 = f2_term(geometry, u, psi)?;
    let analytic = -2.0
        * geometry.cell_area()
        * f2.values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| a * b)
            .sum::<f64>();
    let pairing = |t: f64| spinor_pairing(geometry, &u.axpy(t, v), psi);
    let fd = (pairing(fd_step)? - pairing(-fd_step)?) / (2.0 * fd_step);
    Ok(VariationCheck::new(analytic, fd))
}
