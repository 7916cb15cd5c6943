use rand::Rng;

use super::{GeometryError, TargetManifold, TorusDomain};

/// Discrete map `u: grid → ℝ^q`, stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MapField {
    q: usize,
    values: Vec<f64>,
}

impl MapField {
    pub fn from_values(q: usize, values: Vec<f64>) -> Self {
        assert!(
            q > 0 && values.len().is_multiple_of(q),
            "map values must be a multiple of q"
        );
        Self { q, values }
    }

    pub fn from_fn(domain: &TorusDomain, q: usize, f: impl Fn([f64; 2]) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(domain.node_count() * q);
        for node in 0..domain.node_count() {
            let v = f(domain.coords(node));
            assert_eq!(v.len(), q);
            values.extend(v);
        }
        Self { q, values }
    }

    pub fn constant(domain: &TorusDomain, point: &[f64]) -> Self {
        Self::from_fn(domain, point.len(), |_| point.to_vec())
    }

    /// `u(x, y) = r·e^{i(k1 x + k2 y)}` written in `ℝ²` (needs side lengths `2π`
    /// for the winding to close).
    pub fn winding(domain: &TorusDomain, k: [i64; 2], radius: f64) -> Self {
        let [l1, l2] = domain.lengths();
        let two_pi = 2.0 * std::f64::consts::PI;
        Self::from_fn(domain, 2, |[x, y]| {
            let phase = two_pi * (k[0] as f64 * x / l1 + k[1] as f64 * y / l2);
            vec![radius * phase.cos(), radius * phase.sin()]
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.q
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.q
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.q..(i + 1) * self.q]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.q..(i + 1) * self.q]
    }

    /// Component `A` as a scalar grid field.
    pub fn component(&self, a: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(a)
            .step_by(self.q)
            .copied()
            .collect()
    }

    pub fn set_component(&mut self, a: usize, data: &[f64]) {
        for (i, &x) in data.iter().enumerate() {
            self.values[i * self.q + a] = x;
        }
    }

    /// Maximum distance of any node from the target.
    pub fn target_residual(&self, target: &TargetManifold) -> f64 {
        (0..self.node_count())
            .map(|i| target.distance_to(self.node(i)))
            .fold(0.0, f64::max)
    }

    pub fn on_target(&self, target: &TargetManifold, tol: f64) -> bool {
        self.target_residual(target) <= tol
    }

    /// Nodewise nearest-point projection.
    pub fn project(&self, target: &TargetManifold) -> Result<MapField, GeometryError> {
        let mut out = self.clone();
        for i in 0..self.node_count() {
            target.project_into(self.node(i), out.node_mut(i))?;
        }
        Ok(out)
    }

    /// `max_x ‖u(x) − v(x)‖₂`.
    pub fn c0_distance(&self, other: &MapField) -> f64 {
        (0..self.node_count())
            .map(|i| {
                self.node(i)
                    .iter()
                    .zip(other.node(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn axpy(&self, t: f64, direction: &MapField) -> MapField {
        let values = self
            .values
            .iter()
            .zip(&direction.values)
            .map(|(a, b)| a + t * b)
            .collect();
        MapField { q: self.q, values }
    }
}

/// Random smooth ℝ^q-valued field: a sum of Fourier modes with
/// `|k|∞ ≤ max_mode`, Gaussian coefficients damped like `1/(1+|k|²)`,
/// normalised to unit C⁰ norm.
pub fn smooth_random_field<R: Rng + ?Sized>(
    domain: &TorusDomain,
    q: usize,
    max_mode: i64,
    rng: &mut R,
) -> MapField {
    let [l1, l2] = domain.lengths();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut modes = Vec::new();
    for k1 in -max_mode..=max_mode {
        for k2 in -max_mode..=max_mode {
            let damp = 1.0 / (1.0 + (k1 * k1 + k2 * k2) as f64);
            let coeffs: Vec<(f64, f64)> = (0..q)
                .map(|_| {
                    (
                        damp * super::target::gaussian(rng),
                        damp * super::target::gaussian(rng),
                    )
                })
                .collect();
            modes.push((k1 as f64, k2 as f64, coeffs));
        }
    }
    let mut field = MapField::from_fn(domain, q, |[x, y]| {
        let mut v = vec![0.0; q];
        for (k1, k2, coeffs) in &modes {
            let phase = two_pi * (k1 * x / l1 + k2 * y / l2);
            let (s, c) = phase.sin_cos();
            for (a, (ca, sa)) in coeffs.iter().enumerate() {
                v[a] += ca * c + sa * s;
            }
        }
        v
    });
    let max = field.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max > 0.0 {
        field.values.iter_mut().for_each(|x| *x /= max);
    }
    field
}
