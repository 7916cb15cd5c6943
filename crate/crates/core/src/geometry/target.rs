//! Embedded targets with closed-form nearest-point projection.
//!
//! Both supported targets are products of round spheres of a common radius
//! `r`: a single `Sⁿ ⊂ ℝⁿ⁺¹`, or the flat torus `(S¹)ⁿ ⊂ ℝ²ⁿ`. Every
//! operation acts block-by-block on the factors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeometryError;

const ANTIPODAL_MARGIN: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetKind {
    /// Round `Sⁿ` of the given radius in `ℝⁿ⁺¹`.
    Sphere { dim: usize, radius: f64 },
    /// Flat product `(S¹)ⁿ` of circles of the given radius in `ℝ²ⁿ`.
    Torus { factors: usize, radius: f64 },
}

/// Closed embedded target `N ⊂ ℝ^q` together with its tube data.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetManifold {
    kind: TargetKind,
    radius: f64,
    block_len: usize,
    blocks: usize,
    tube_radius: f64,
    tangency_tol: f64,
}

impl TargetManifold {
    pub fn new(kind: TargetKind) -> Result<Self, GeometryError> {
        let (radius, block_len, blocks) = match kind {
            TargetKind::Sphere { dim, radius } => {
                if dim == 0 {
                    return Err(GeometryError::InvalidTarget(
                        "sphere dimension must be ≥ 1".into(),
                    ));
                }
                (radius, dim + 1, 1)
            }
            TargetKind::Torus { factors, radius } => {
                if factors == 0 {
                    return Err(GeometryError::InvalidTarget(
                        "torus needs ≥ 1 factor".into(),
                    ));
                }
                (radius, 2, factors)
            }
        };
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidTarget(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            kind,
            radius,
            block_len,
            blocks,
            tube_radius: 0.5 * radius,
            tangency_tol: 1e-10,
        })
    }

    pub fn sphere(dim: usize, radius: f64) -> Result<Self, GeometryError> {
        Self::new(TargetKind::Sphere { dim, radius })
    }

    pub fn torus(factors: usize, radius: f64) -> Result<Self, GeometryError> {
        Self::new(TargetKind::Torus { factors, radius })
    }

    /// Replaces the tube radius; it must stay below `1 / C`.
    pub fn with_tube_radius(mut self, delta: f64) -> Result<Self, GeometryError> {
        if !(delta > 0.0 && delta * self.weingarten_bound() < 1.0) {
            return Err(GeometryError::InvalidTarget(format!(
                "tube radius {delta} must lie in (0, 1/C) = (0, {})",
                1.0 / self.weingarten_bound()
            )));
        }
        self.tube_radius = delta;
        Ok(self)
    }

    pub fn with_tangency_tol(mut self, tol: f64) -> Self {
        self.tangency_tol = tol;
        self
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn ambient_dim(&self) -> usize {
        self.block_len * self.blocks
    }

    pub fn intrinsic_dim(&self) -> usize {
        (self.block_len - 1) * self.blocks
    }

    pub fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    /// Bound on the norm of the Weingarten map.
    pub fn weingarten_bound(&self) -> f64 {
        1.0 / self.radius
    }

    pub fn injectivity_radius(&self) -> f64 {
        std::f64::consts::PI * self.radius
    }

    pub fn tangency_tol(&self) -> f64 {
        self.tangency_tol
    }

    /// Whether the target is intrinsically flat.
    pub fn is_flat(&self) -> bool {
        self.block_len == 2
    }

    fn block(&self, b: usize) -> std::ops::Range<usize> {
        b * self.block_len..(b + 1) * self.block_len
    }

    pub fn distance_to(&self, z: &[f64]) -> f64 {
        (0..self.blocks)
            .map(|b| {
                let d = norm(&z[self.block(b)]) - self.radius;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    fn check_tube(&self, z: &[f64]) -> Result<(), GeometryError> {
        let distance = self.distance_to(z);
        if distance > self.tube_radius || !distance.is_finite() {
            return Err(GeometryError::TubeViolation {
                distance,
                tube: self.tube_radius,
            });
        }
        Ok(())
    }

    pub fn project_into(&self, z: &[f64], out: &mut [f64]) -> Result<(), GeometryError> {
        self.check_tube(z)?;
        for b in 0..self.blocks {
            let r = self.block(b);
            let scale = self.radius / norm(&z[r.clone()]);
            for i in r {
                out[i] = z[i] * scale;
            }
        }
        Ok(())
    }

    /// Nearest-point projection onto `N`.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let mut out = vec![0.0; z.len()];
        self.project_into(z, &mut out)?;
        Ok(out)
    }

    /// Jacobian `π^A_B(z)`, row-major `[A * q + B]`.
    pub fn jacobian_into(&self, z: &[f64], out: &mut [f64]) -> Result<(), GeometryError> {
        self.check_tube(z)?;
        let q = self.ambient_dim();
        out[..q * q].iter_mut().for_each(|x| *x = 0.0);
        for b in 0..self.blocks {
            let r = self.block(b);
            let zn = norm(&z[r.clone()]);
            let s = self.radius / zn;
            for a in r.clone() {
                for c in r.clone() {
                    let delta = if a == c { 1.0 } else { 0.0 };
                    out[a * q + c] = s * (delta - z[a] * z[c] / (zn * zn));
                }
            }
        }
        Ok(())
    }

    pub fn jacobian(&self, z: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let q = self.ambient_dim();
        let mut out = vec![0.0; q * q];
        self.jacobian_into(z, &mut out)?;
        Ok(out)
    }

    /// Second derivatives `π^A_{BC}(z)`, laid out `[(A * q + B) * q + C]`.
    pub fn hessian_into(&self, z: &[f64], out: &mut [f64]) -> Result<(), GeometryError> {
        self.check_tube(z)?;
        let q = self.ambient_dim();
        out[..q * q * q].iter_mut().for_each(|x| *x = 0.0);
        let kd = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        for b in 0..self.blocks {
            let r = self.block(b);
            let zn = norm(&z[r.clone()]);
            let inv3 = self.radius / (zn * zn * zn);
            let inv5 = 3.0 * self.radius / (zn * zn * zn * zn * zn);
            for a in r.clone() {
                for bb in r.clone() {
                    for c in r.clone() {
                        out[(a * q + bb) * q + c] = -inv3
                            * (kd(a, bb) * z[c] + kd(a, c) * z[bb] + kd(bb, c) * z[a])
                            + inv5 * z[a] * z[bb] * z[c];
                    }
                }
            }
        }
        Ok(())
    }

    pub fn hessian(&self, z: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let q = self.ambient_dim();
        let mut out = vec![0.0; q * q * q];
        self.hessian_into(z, &mut out)?;
        Ok(out)
    }

    /// Orthogonal projector onto `T_pN` for `p ∈ N`.
    pub fn tangent_projector(&self, p: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.jacobian(p)
    }

    /// Euclidean norm of the normal component of `x` at `p`.
    pub fn normal_residual(&self, p: &[f64], x: &[f64]) -> f64 {
        let mut sq = 0.0;
        for b in 0..self.blocks {
            let r = self.block(b);
            let pn = norm(&p[r.clone()]);
            let c = dot(&p[r.clone()], &x[r.clone()]) / pn;
            sq += c * c;
        }
        sq.sqrt()
    }

    fn check_on_target(&self, p: &[f64]) -> Result<(), GeometryError> {
        let d = self.distance_to(p);
        if d > self.tangency_tol * self.radius.max(1.0) {
            return Err(GeometryError::TubeViolation {
                distance: d,
                tube: self.tangency_tol,
            });
        }
        Ok(())
    }

    fn check_tangent(&self, p: &[f64], x: &[f64]) -> Result<(), GeometryError> {
        let residual = self.normal_residual(p, x);
        if residual > self.tangency_tol * norm(x).max(1.0) {
            return Err(GeometryError::NotTangent { residual });
        }
        Ok(())
    }

    /// `II(X, Y) = π^A_{BC}(p) X^B Y^C`, normal to `T_pN`.
    pub fn second_fundamental_form(
        &self,
        p: &[f64],
        x: &[f64],
        y: &[f64],
    ) -> Result<Vec<f64>, GeometryError> {
        self.check_on_target(p)?;
        self.check_tangent(p, x)?;
        self.check_tangent(p, y)?;
        let q = self.ambient_dim();
        let h = self.hessian(p)?;
        let mut out = vec![0.0; q];
        for a in 0..q {
            let mut s = 0.0;
            for b in 0..q {
                for c in 0..q {
                    s += h[(a * q + b) * q + c] * x[b] * y[c];
                }
            }
            out[a] = s;
        }
        Ok(out)
    }

    /// Per-factor rotation data from `p` to `q`: unit vectors `p̂`, `t̂`
    /// (initial geodesic direction) and the angle.
    fn block_geodesic(
        &self,
        p: &[f64],
        q: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, f64), GeometryError> {
        let pn = norm(p);
        let qn = norm(q);
        let ph: Vec<f64> = p.iter().map(|x| x / pn).collect();
        let qh: Vec<f64> = q.iter().map(|x| x / qn).collect();
        let c = dot(&ph, &qh);
        let mut w: Vec<f64> = qh.iter().zip(&ph).map(|(a, b)| a - c * b).collect();
        let s = norm(&w);
        let angle = s.atan2(c);
        if angle > std::f64::consts::PI - ANTIPODAL_MARGIN {
            return Err(GeometryError::BeyondInjectivity {
                distance: angle * self.radius,
                injectivity: self.injectivity_radius(),
            });
        }
        if s > 0.0 {
            w.iter_mut().for_each(|x| *x /= s);
        }
        Ok((ph, w, angle))
    }

    pub fn exp_map(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_on_target(p)?;
        self.check_tangent(p, v)?;
        let mut out = vec![0.0; p.len()];
        for b in 0..self.blocks {
            let r = self.block(b);
            let vb = &v[r.clone()];
            let speed = norm(vb);
            let theta = speed / self.radius;
            for i in r.clone() {
                out[i] = if speed > 0.0 {
                    theta.cos() * p[i] + self.radius * theta.sin() * v[i] / speed
                } else {
                    p[i]
                };
            }
        }
        Ok(out)
    }

    pub fn log_map(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_on_target(p)?;
        self.check_on_target(q)?;
        let mut out = vec![0.0; p.len()];
        for b in 0..self.blocks {
            let r = self.block(b);
            let (_, t, angle) = self.block_geodesic(&p[r.clone()], &q[r.clone()])?;
            for (i, ti) in r.zip(t) {
                out[i] = self.radius * angle * ti;
            }
        }
        Ok(out)
    }

    pub fn geodesic_distance(&self, p: &[f64], q: &[f64]) -> Result<f64, GeometryError> {
        Ok(norm(&self.log_map(p, q)?))
    }

    /// Orthogonal `q × q` matrix (row-major) that restricts to parallel
    /// transport `T_pN → T_qN` along the shortest geodesic and maps `p` to `q`.
    pub fn transport_matrix(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let dim = self.ambient_dim();
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        for b in 0..self.blocks {
            let r = self.block(b);
            let (ph, t, angle) = self.block_geodesic(&p[r.clone()], &q[r.clone()])?;
            if angle == 0.0 {
                continue;
            }
            let (s, c) = angle.sin_cos();
            let o = r.start;
            for i in 0..r.len() {
                for j in 0..r.len() {
                    m[(o + i) * dim + o + j] += (c - 1.0) * (ph[i] * ph[j] + t[i] * t[j])
                        + s * (t[i] * ph[j] - ph[i] * t[j]);
                }
            }
        }
        Ok(m)
    }

    pub fn parallel_transport(
        &self,
        p: &[f64],
        q: &[f64],
        x: &[f64],
    ) -> Result<Vec<f64>, GeometryError> {
        self.check_on_target(p)?;
        self.check_on_target(q)?;
        self.check_tangent(p, x)?;
        let m = self.transport_matrix(p, q)?;
        Ok(mat_vec(&m, x))
    }

    /// Ratio `d^N(p, q) / ‖p − q‖₂` (defined as 1 for `p = q`).
    pub fn distance_comparison_check(&self, p: &[f64], q: &[f64]) -> Result<f64, GeometryError> {
        let chord = norm(&p.iter().zip(q).map(|(a, b)| a - b).collect::<Vec<_>>());
        if chord == 0.0 {
            return Ok(1.0);
        }
        Ok(self.geodesic_distance(p, q)? / chord)
    }

    /// Uniformly distributed point on `N`.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.ambient_dim()).map(|_| gaussian(rng)).collect();
        for b in 0..self.blocks {
            let r = self.block(b);
            let s = self.radius / norm(&z[r.clone()]);
            z[r].iter_mut().for_each(|x| *x *= s);
        }
        z
    }

    /// Gaussian tangent vector at `p`.
    pub fn random_tangent<R: Rng + ?Sized>(&self, p: &[f64], rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.ambient_dim()).map(|_| gaussian(rng)).collect();
        let proj = self.jacobian(p).expect("point on target");
        mat_vec(&proj, &z)
    }
}

/// Parameters of the tube/ball construction used to guarantee unique
/// shortest geodesics between nearby maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeConstants {
    /// Scale below which the distance comparison holds, `δ₀ < 1/C`.
    pub delta0: f64,
    /// Geodesic neighbourhood size, `2ε < inj(N)`.
    pub epsilon: f64,
    pub delta: f64,
    /// Ball radius around the initial map, `R ≤ δ`.
    pub ball_radius: f64,
}

impl TubeConstants {
    /// Largest admissible choice (with a 10% margin) for a target.
    pub fn for_target(target: &TargetManifold) -> Self {
        let c = target.weingarten_bound();
        let delta0 = 0.5 / c;
        let epsilon = 0.45 * target.injectivity_radius();
        let delta = 0.9 * (0.25 * delta0).min(0.25 * epsilon * (1.0 - delta0 * c));
        Self {
            delta0,
            epsilon,
            delta,
            ball_radius: delta,
        }
    }

    pub fn validate(&self, target: &TargetManifold) -> Result<(), GeometryError> {
        let c = target.weingarten_bound();
        let fail = |msg: String| Err(GeometryError::InvalidConstants(msg));
        if !(self.delta0 > 0.0 && self.delta0 * c < 1.0) {
            return fail(format!("δ₀ = {} must lie in (0, 1/C)", self.delta0));
        }
        if !(self.epsilon > 0.0 && 2.0 * self.epsilon < target.injectivity_radius()) {
            return fail(format!("2ε = {} must be below inj(N)", 2.0 * self.epsilon));
        }
        let bound = (0.25 * self.delta0).min(0.25 * self.epsilon * (1.0 - self.delta0 * c));
        if !(self.delta > 0.0 && self.delta < bound) {
            return fail(format!("δ = {} must lie in (0, {bound})", self.delta));
        }
        if !(self.ball_radius > 0.0 && self.ball_radius <= self.delta) {
            return fail(format!("R = {} must lie in (0, δ]", self.ball_radius));
        }
        Ok(())
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn mat_vec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], x)).collect()
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box–Muller
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
