//! The kernel constraint `ψ(u)`: transport, spectral projection onto the
//! near-kernel, normalisation and phase alignment. Also the empirical
//! Lipschitz diagnostics for the operator family and pointwise transport.

use num_complex::Complex64;
use rand::Rng;

use super::operator::dirac_along_map;
use super::spinor::{weighted_inner, weighted_norm};
use super::{
    assemble_operator, compute_spectrum_with, DiracError, DiracOperator, SpectralReport,
    SpectrumOptions, TwistedSpinorField,
};
use crate::geometry::{Geometry, MapField};

type C = Complex64;

/// Lower bound on the pre-normalisation projection norm.
pub const DEFAULT_PROJECTION_TOL: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct ConstraintSolution {
    /// Unit-norm kernel spinor along `π∘u`.
    pub psi: TwistedSpinorField,
    /// `‖Π_ker P ψ_ref‖` before normalisation.
    pub projection_norm: f64,
    /// `‖D̸ψ‖_{L²}`.
    pub residual: f64,
    pub report: SpectralReport,
}

/// Moves a twisted spinor over `from` to one over `to` by pointwise parallel
/// transport along shortest geodesics of the target.
pub fn transport_spinor(
    geometry: &Geometry,
    psi: &TwistedSpinorField,
    from: &MapField,
    to: &MapField,
) -> Result<TwistedSpinorField, DiracError> {
    let q = geometry.q();
    let target = &geometry.target;
    let mut out = psi.clone();
    let mut pf = vec![0.0; q];
    let mut pt = vec![0.0; q];
    for node in 0..geometry.nodes() {
        target.project_into(from.node(node), &mut pf)?;
        target.project_into(to.node(node), &mut pt)?;
        let m = target.transport_matrix(&pf, &pt)?;
        for s in 0..2 {
            let c = psi.coefficients(node, s);
            let o = out.coefficients_mut(node, s);
            for a in 0..q {
                o[a] = (0..q).map(|b| c[b] * m[a * q + b]).sum();
            }
        }
    }
    Ok(out)
}

/// Projects a spinor already living over the operator's map onto the
/// near-kernel of `report`, normalises and aligns its phase with `phase_ref`
/// (or with the input itself when no reference is given).
pub fn project_to_kernel(
    op: &DiracOperator,
    report: &SpectralReport,
    psi: &TwistedSpinorField,
    phase_ref: Option<&TwistedSpinorField>,
    projection_tol: f64,
) -> Result<ConstraintSolution, DiracError> {
    if !report.is_minimal() {
        return Err(DiracError::KernelNotMinimal {
            dim: report.kernel_dim,
        });
    }
    let threshold = 2.0 * report.kernel_tol;
    match report.gap {
        Some(gap) if gap > threshold => {}
        gap => {
            return Err(DiracError::GapCollapsed {
                gap: gap.unwrap_or(0.0),
                threshold,
            })
        }
    }
    let h = op.geometry().cell_area();
    let mut values = vec![C::new(0.0, 0.0); psi.values().len()];
    for e in report.kernel_vectors() {
        let c = weighted_inner(e.values(), psi.values(), h);
        for (v, ei) in values.iter_mut().zip(e.values()) {
            *v += ei * c;
        }
    }
    let norm = weighted_norm(&values, h);
    let reference = weighted_norm(psi.values(), h);
    let projection_norm = if reference > 0.0 {
        norm / reference
    } else {
        0.0
    };
    if projection_norm < projection_tol {
        return Err(DiracError::ProjectionDegenerate {
            norm: projection_norm,
            tol: projection_tol,
        });
    }
    let mut out = TwistedSpinorField::from_values(psi.ambient_dim(), values);
    out.scale(C::new(1.0 / norm, 0.0));
    let phase_ref = phase_ref.unwrap_or(psi);
    let overlap = weighted_inner(out.values(), phase_ref.values(), h);
    if overlap.norm() > 0.0 {
        out.scale(overlap / overlap.norm());
    }
    let residual = weighted_norm(&op.apply(out.values()), h);
    Ok(ConstraintSolution {
        psi: out,
        projection_norm,
        residual,
        report: report.clone(),
    })
}

/// `ψ(u)`: transports `psi_ref` (a unit spinor over `ref_map`) to `π∘u`,
/// projects onto the kernel of `D̸^{π∘u}`, normalises and fixes the phase.
pub fn solve_constraint(
    geometry: &Geometry,
    u: &MapField,
    psi_ref: &TwistedSpinorField,
    ref_map: &MapField,
    phase_ref: Option<&TwistedSpinorField>,
    opts: &SpectrumOptions,
) -> Result<ConstraintSolution, DiracError> {
    let op = assemble_operator(geometry, u)?;
    let report = compute_spectrum_with(&op, opts)?;
    let moved = transport_spinor(geometry, psi_ref, ref_map, u)?;
    project_to_kernel(&op, &report, &moved, phase_ref, DEFAULT_PROJECTION_TOL)
}

/// Largest observed ratio
/// `‖P⁻¹ D̸^{π∘u} P ψ − D̸^{π∘v} ψ‖ / (‖u − v‖_{C⁰} ‖ψ‖)` over `trials` smooth
/// random spinors along `v`, with `P` the pointwise transport from `π∘v` to
/// `π∘u`. Returns 0 when `u = v`.
pub fn operator_lipschitz_check<R: Rng + ?Sized>(
    geometry: &Geometry,
    u: &MapField,
    v: &MapField,
    trials: usize,
    rng: &mut R,
) -> Result<f64, DiracError> {
    let pu = u.project(&geometry.target)?;
    let pv = v.project(&geometry.target)?;
    let dist = pu.c0_distance(&pv);
    let h = geometry.cell_area();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let psi = TwistedSpinorField::smooth_random(geometry, &pv, 3, rng);
        if dist == 0.0 {
            continue;
        }
        let moved = transport_spinor(geometry, &psi, &pv, &pu)?;
        let du = dirac_along_map(geometry, &pu, &moved)?;
        let back = transport_spinor(geometry, &du, &pu, &pv)?;
        let dv = dirac_along_map(geometry, &pv, &psi)?;
        let diff = weighted_norm(back.sub(&dv).values(), h);
        worst = worst.max(diff / (dist * psi.l2_norm(h)));
    }
    Ok(worst)
}

/// Largest pointwise ratio
/// `|P^{v,u₀} P^{u,v} P^{u₀,u} Z − Z| / (‖u − v‖_{C⁰} |Z|)` over random tangent
/// vectors `Z` at `π(u₀(x))`.
pub fn holonomy_check<R: Rng + ?Sized>(
    geometry: &Geometry,
    u0: &MapField,
    u: &MapField,
    v: &MapField,
    rng: &mut R,
) -> Result<f64, DiracError> {
    let target = &geometry.target;
    let p0 = u0.project(target)?;
    let pu = u.project(target)?;
    let pv = v.project(target)?;
    let dist = pu.c0_distance(&pv);
    if dist == 0.0 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for node in 0..geometry.nodes() {
        let (a, b, c) = (p0.node(node), pu.node(node), pv.node(node));
        let z = target.random_tangent(a, rng);
        let z1 = target.parallel_transport(a, b, &z)?;
        let z2 = target.parallel_transport(b, c, &z1)?;
        let z3 = target.parallel_transport(c, a, &z2)?;
        let err: f64 = z3
            .iter()
            .zip(&z)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let nz: f64 = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nz > 0.0 {
            worst = worst.max(err / (dist * nz));
        }
    }
    Ok(worst)
}
