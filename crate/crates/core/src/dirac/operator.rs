//! The free Dirac operator and the Dirac operator along a map.

use faer::Mat;
use num_complex::Complex64;

use super::clifford::clifford_mul;
use super::{DiracError, SpinorField, TwistedSpinorField};
use crate::geometry::{Geometry, MapField};

type C = Complex64;

/// Largest ambient dimension `2·q·n1·n2` assembled densely by default.
pub const DENSE_LIMIT: usize = 1200;

/// Ratio between the off-tangent mass and the free spectral radius.
pub const OFF_TANGENT_MASS_FACTOR: f64 = 10.0;

/// Applies `∂̸` to every ambient component of data laid out
/// `[(node * 2 + s) * q + A]`.
pub(crate) fn free_dirac_raw(geometry: &Geometry, data: &[C], q: usize) -> Vec<C> {
    let spectral = &geometry.spectral;
    let shift = geometry.domain.spin().shift();
    let n = geometry.nodes();
    let mut out = vec![C::new(0.0, 0.0); data.len()];
    let mut up = vec![C::new(0.0, 0.0); n];
    let mut down = vec![C::new(0.0, 0.0); n];
    for a in 0..q {
        for node in 0..n {
            up[node] = data[(node * 2) * q + a];
            down[node] = data[(node * 2 + 1) * q + a];
        }
        spectral.forward(&mut up, shift);
        spectral.forward(&mut down, shift);
        for (idx, k1, k2) in spectral.modes(shift) {
            // ∂_β ↦ iκ_β, e_β ↦ iσ_β, so ∂̸ ↦ −(κ₁σ₁ + κ₂σ₂).
            let (u0, d0) = (up[idx], down[idx]);
            up[idx] = -C::new(k1, -k2) * d0;
            down[idx] = -C::new(k1, k2) * u0;
        }
        spectral.inverse(&mut up, shift);
        spectral.inverse(&mut down, shift);
        for node in 0..n {
            out[(node * 2) * q + a] = up[node];
            out[(node * 2 + 1) * q + a] = down[node];
        }
    }
    out
}

/// The usual Dirac operator `∂̸ = e_β·∇_β` under the domain's spin structure.
pub fn free_dirac(geometry: &Geometry, psi: &SpinorField) -> SpinorField {
    SpinorField {
        values: free_dirac_raw(geometry, &psi.values, 1),
    }
}

/// Spectral radius of `∂̸` on the grid.
pub fn free_spectral_radius(geometry: &Geometry) -> f64 {
    geometry
        .spectral
        .max_wavenumber(geometry.domain.spin().shift())
}

/// Nodewise tangent projectors `P(π(u(x)))`, laid out `[node * q² + A * q + B]`,
/// together with the projected map.
pub(crate) fn projected_frames(
    geometry: &Geometry,
    u: &MapField,
) -> Result<(MapField, Vec<f64>), DiracError> {
    let q = geometry.q();
    let p = u.project(&geometry.target)?;
    let mut projectors = vec![0.0; geometry.nodes() * q * q];
    for node in 0..geometry.nodes() {
        geometry.target.jacobian_into(
            p.node(node),
            &mut projectors[node * q * q..(node + 1) * q * q],
        )?;
    }
    Ok((p, projectors))
}

/// Tangential part of the spectral gradient of `π∘u`: `[β][node * q + A]`.
pub(crate) fn tangential_gradient(
    geometry: &Geometry,
    p: &MapField,
    projectors: &[f64],
) -> [Vec<f64>; 2] {
    let q = geometry.q();
    let raw = geometry.map_gradient(p);
    let mut out = [vec![0.0; raw[0].len()], vec![0.0; raw[1].len()]];
    for beta in 0..2 {
        for node in 0..geometry.nodes() {
            let proj = &projectors[node * q * q..(node + 1) * q * q];
            let g = &raw[beta][node * q..(node + 1) * q];
            for a in 0..q {
                out[beta][node * q + a] = (0..q).map(|b| proj[a * q + b] * g[b]).sum();
            }
        }
    }
    out
}

/// `D̸^{π∘u}ψ` in ambient form:
/// `∂̸ψ^A − π^A_{BC}(π∘u) ∇(π∘u)^B · ψ^C`, projected onto the tangent spaces.
///
/// The gradient entering the connection term is the tangential part of the
/// spectral gradient of `π∘u`. For tangent `ψ` the connection term is normal,
/// so the projection leaves `P∂̸ψ`; it removes the normal residue that the
/// discrete derivative leaves behind at coarse resolution.
pub fn dirac_along_map(
    geometry: &Geometry,
    u: &MapField,
    psi: &TwistedSpinorField,
) -> Result<TwistedSpinorField, DiracError> {
    let q = geometry.q();
    let (p, projectors) = projected_frames(geometry, u)?;
    let residual = psi.tangency_residual(geometry, &p);
    let tol = 1e-9 * psi.c0_norm().max(1.0);
    if residual > tol {
        return Err(DiracError::TangencyViolation { residual, tol });
    }
    let mut out = free_dirac_raw(geometry, psi.values(), q);
    let grad = tangential_gradient(geometry, &p, &projectors);
    let mut hess = vec![0.0; q * q * q];
    for node in 0..geometry.nodes() {
        geometry.target.hessian_into(p.node(node), &mut hess)?;
        for (beta, g) in grad.iter().enumerate() {
            let x = &g[node * q..(node + 1) * q];
            for c in 0..q {
                let s = [psi.coefficients(node, 0)[c], psi.coefficients(node, 1)[c]];
                let es = clifford_mul(beta + 1, s);
                for a in 0..q {
                    let coeff: f64 = (0..q).map(|b| hess[(a * q + b) * q + c] * x[b]).sum();
                    if coeff != 0.0 {
                        out[(node * 2) * q + a] -= es[0] * coeff;
                        out[(node * 2 + 1) * q + a] -= es[1] * coeff;
                    }
                }
            }
        }
    }
    let mut out = TwistedSpinorField::from_values(q, out);
    out.project_tangent(geometry, &p);
    Ok(out)
}

/// How to realise the operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assembly {
    /// Dense below [`DENSE_LIMIT`], matrix-free above.
    Auto,
    Dense,
    MatrixFree,
}

/// `Π D̸^{π∘u} Π + μ_off (I − Π)` on the full ambient coefficient space, where
/// `Π` is the nodewise tangent projector.
#[derive(Clone, Debug)]
pub struct DiracOperator {
    geometry: Geometry,
    base: MapField,
    projectors: Vec<f64>,
    mass: f64,
    dense: Option<Mat<C>>,
    hermiticity_residual: Option<f64>,
}

/// Assembles the Dirac operator along `u` (dense below [`DENSE_LIMIT`]).
pub fn assemble_operator(geometry: &Geometry, u: &MapField) -> Result<DiracOperator, DiracError> {
    assemble_operator_with(geometry, u, Assembly::Auto)
}

pub fn assemble_operator_with(
    geometry: &Geometry,
    u: &MapField,
    assembly: Assembly,
) -> Result<DiracOperator, DiracError> {
    let (base, projectors) = projected_frames(geometry, u)?;
    let mass = OFF_TANGENT_MASS_FACTOR * free_spectral_radius(geometry);
    let mut op = DiracOperator {
        geometry: geometry.clone(),
        base,
        projectors,
        mass,
        dense: None,
        hermiticity_residual: None,
    };
    let dense = match assembly {
        Assembly::Auto => op.dim() <= DENSE_LIMIT,
        Assembly::Dense => true,
        Assembly::MatrixFree => false,
    };
    if dense {
        let raw = op.raw_matrix();
        let n = op.dim();
        let mut diff = 0.0;
        let mut total = 0.0;
        for j in 0..n {
            for i in 0..n {
                diff += (raw[(i, j)] - raw[(j, i)].conj()).norm_sqr();
                total += raw[(i, j)].norm_sqr();
            }
        }
        op.hermiticity_residual = Some((diff / total.max(f64::MIN_POSITIVE)).sqrt());
        op.dense = Some(Mat::from_fn(n, n, |i, j| {
            0.5 * (raw[(i, j)] + raw[(j, i)].conj())
        }));
    }
    Ok(op)
}

impl DiracOperator {
    pub fn dim(&self) -> usize {
        2 * self.geometry.q() * self.geometry.nodes()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// The projected map `π∘u` the operator lives over.
    pub fn base_map(&self) -> &MapField {
        &self.base
    }

    pub fn projectors(&self) -> &[f64] {
        &self.projectors
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn dense(&self) -> Option<&Mat<C>> {
        self.dense.as_ref()
    }

    /// Relative Frobenius residual `‖A − A*‖ / ‖A‖` of the assembled matrix
    /// before symmetrisation.
    pub fn hermiticity_residual(&self) -> Option<f64> {
        self.hermiticity_residual
    }

    /// Applies `Π` in place.
    pub fn project_tangent(&self, x: &mut [C]) {
        let q = self.geometry.q();
        let mut tmp = vec![C::new(0.0, 0.0); q];
        for node in 0..self.geometry.nodes() {
            let proj = &self.projectors[node * q * q..(node + 1) * q * q];
            for s in 0..2 {
                let o = (node * 2 + s) * q;
                for a in 0..q {
                    tmp[a] = (0..q).map(|b| x[o + b] * proj[a * q + b]).sum();
                }
                x[o..o + q].copy_from_slice(&tmp);
            }
        }
    }

    /// Matrix-free action.
    pub fn apply(&self, x: &[C]) -> Vec<C> {
        let q = self.geometry.q();
        let mut tangent = x.to_vec();
        self.project_tangent(&mut tangent);
        let mut y = free_dirac_raw(&self.geometry, &tangent, q);
        self.project_tangent(&mut y);
        for ((yi, xi), ti) in y.iter_mut().zip(x).zip(&tangent) {
            *yi += (xi - ti) * self.mass;
        }
        y
    }

    /// Applies the operator to a twisted spinor field.
    pub fn apply_field(&self, psi: &TwistedSpinorField) -> TwistedSpinorField {
        TwistedSpinorField::from_values(self.geometry.q(), self.apply(psi.values()))
    }

    /// Dense Hermitian matrix of the operator (assembled on demand).
    pub fn to_dense(&self) -> Mat<C> {
        if let Some(m) = &self.dense {
            return m.clone();
        }
        let raw = self.raw_matrix();
        let n = raw.nrows();
        Mat::from_fn(n, n, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)].conj()))
    }

    fn raw_matrix(&self) -> Mat<C> {
        let n = self.dim();
        let mut m = Mat::<C>::zeros(n, n);
        let mut e = vec![C::new(0.0, 0.0); n];
        for j in 0..n {
            e[j] = C::new(1.0, 0.0);
            let col = self.apply(&e);
            for (i, v) in col.into_iter().enumerate() {
                m[(i, j)] = v;
            }
            e[j] = C::new(0.0, 0.0);
        }
        m
    }
}
