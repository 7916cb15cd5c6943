//! Spinor fields on the grid.

use num_complex::Complex64;
use rand::Rng;

use crate::geometry::{gaussian, smooth_random_field, Geometry, MapField};

type C = Complex64;

/// Ordinary spinor field: one `ℂ²` value per node, stored `[node * 2 + s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub values: Vec<C>,
}

impl SpinorField {
    pub fn zeros(nodes: usize) -> Self {
        Self {
            values: vec![C::new(0.0, 0.0); 2 * nodes],
        }
    }

    pub fn from_fn(geometry: &Geometry, f: impl Fn([f64; 2]) -> [C; 2]) -> Self {
        let d = &geometry.domain;
        let mut values = Vec::with_capacity(2 * d.node_count());
        for node in 0..d.node_count() {
            values.extend(f(d.coords(node)));
        }
        Self { values }
    }

    pub fn l2_norm(&self, cell_area: f64) -> f64 {
        weighted_norm(&self.values, cell_area)
    }
}

/// Spinor along a map, `ψ = ψ^A ⊗ ∂_A`: a `ℂ²` value for each ambient
/// coordinate at each node, stored `[(node * 2 + s) * q + A]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwistedSpinorField {
    q: usize,
    values: Vec<C>,
}

impl TwistedSpinorField {
    pub fn zeros(nodes: usize, q: usize) -> Self {
        Self {
            q,
            values: vec![C::new(0.0, 0.0); 2 * nodes * q],
        }
    }

    pub fn from_values(q: usize, values: Vec<C>) -> Self {
        assert!(q > 0 && values.len().is_multiple_of(2 * q));
        Self { q, values }
    }

    /// Gaussian white-noise field projected onto the tangent spaces of `u`.
    pub fn random_tangent<R: Rng + ?Sized>(geometry: &Geometry, u: &MapField, rng: &mut R) -> Self {
        let q = geometry.q();
        let values = (0..2 * geometry.nodes() * q)
            .map(|_| C::new(gaussian(rng), gaussian(rng)))
            .collect();
        let mut psi = Self { q, values };
        psi.project_tangent(geometry, u);
        psi
    }

    /// Smooth random tangent field with unit weighted L² norm, built from
    /// Fourier modes with `|k|∞ ≤ max_mode`.
    pub fn smooth_random<R: Rng + ?Sized>(
        geometry: &Geometry,
        u: &MapField,
        max_mode: i64,
        rng: &mut R,
    ) -> Self {
        let q = geometry.q();
        let mut parts = Vec::with_capacity(4);
        for _ in 0..4 {
            parts.push(smooth_random_field(&geometry.domain, q, max_mode, rng));
        }
        let mut values = vec![C::new(0.0, 0.0); 2 * q * geometry.nodes()];
        for node in 0..geometry.nodes() {
            for s in 0..2 {
                for a in 0..q {
                    values[(node * 2 + s) * q + a] =
                        C::new(parts[2 * s].node(node)[a], parts[2 * s + 1].node(node)[a]);
                }
            }
        }
        let mut psi = Self { q, values };
        psi.project_tangent(geometry, u);
        let n = psi.l2_norm(geometry.cell_area());
        psi.scale(C::new(1.0 / n, 0.0));
        psi
    }

    /// `ξ ⊗ V(x)` with constant spinor `ξ` and a vector field `V`.
    pub fn from_spinor_and_vectors(xi: [C; 2], vectors: &MapField) -> Self {
        let q = vectors.ambient_dim();
        let mut values = Vec::with_capacity(2 * vectors.node_count() * q);
        for i in 0..vectors.node_count() {
            for s in xi {
                values.extend(vectors.node(i).iter().map(|&v| s * v));
            }
        }
        Self { q, values }
    }

    pub fn ambient_dim(&self) -> usize {
        self.q
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / (2 * self.q)
    }

    pub fn values(&self) -> &[C] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C> {
        self.values
    }

    /// The `ℂ^q` coefficient vector of spinor component `s` at `node`.
    pub fn coefficients(&self, node: usize, s: usize) -> &[C] {
        let o = (node * 2 + s) * self.q;
        &self.values[o..o + self.q]
    }

    pub fn coefficients_mut(&mut self, node: usize, s: usize) -> &mut [C] {
        let o = (node * 2 + s) * self.q;
        &mut self.values[o..o + self.q]
    }

    /// `ψ^A` as an ordinary spinor field.
    pub fn component(&self, a: usize) -> SpinorField {
        SpinorField {
            values: self
                .values
                .iter()
                .skip(a)
                .step_by(self.q)
                .copied()
                .collect(),
        }
    }

    pub fn l2_norm(&self, cell_area: f64) -> f64 {
        weighted_norm(&self.values, cell_area)
    }

    pub fn l2_inner(&self, other: &Self, cell_area: f64) -> C {
        weighted_inner(&self.values, &other.values, cell_area)
    }

    /// `max_x |ψ(x)|` with `|ψ(x)|² = Σ_{s,A} |ψ^A_s(x)|²`.
    pub fn c0_norm(&self) -> f64 {
        self.values
            .chunks(2 * self.q)
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, c: C) {
        self.values.iter_mut().for_each(|z| *z *= c);
    }

    pub fn sub(&self, other: &Self) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self { q: self.q, values }
    }

    /// Applies `P(π(u(x)))` to the coefficients at every node.
    pub fn project_tangent(&mut self, geometry: &Geometry, u: &MapField) {
        let q = self.q;
        for node in 0..self.node_count() {
            let p = geometry
                .target
                .project(u.node(node))
                .and_then(|p| geometry.target.jacobian(&p))
                .expect("base map inside the tube");
            for s in 0..2 {
                let c = self.coefficients(node, s).to_vec();
                let out = self.coefficients_mut(node, s);
                for a in 0..q {
                    out[a] = (0..q).map(|b| c[b] * p[a * q + b]).sum();
                }
            }
        }
    }

    /// `max_x |ψ(x) − P(π(u(x)))ψ(x)|`.
    pub fn tangency_residual(&self, geometry: &Geometry, u: &MapField) -> f64 {
        let mut projected = self.clone();
        projected.project_tangent(geometry, u);
        self.sub(&projected).c0_norm()
    }
}

pub(crate) fn weighted_inner(a: &[C], b: &[C], cell_area: f64) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C>() * cell_area
}

pub(crate) fn weighted_norm(a: &[C], cell_area: f64) -> f64 {
    (a.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell_area).sqrt()
}
