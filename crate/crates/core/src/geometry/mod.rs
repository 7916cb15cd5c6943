//! Flat spin tori, embedded targets and the pointwise geometry linking them.

mod domain;
mod field;
pub mod spectral;
mod target;

use thiserror::Error;

pub use domain::{Boundary, SpinStructure, TorusDomain};
pub use field::{smooth_random_field, MapField};
pub use spectral::Spectral;
pub use target::{TargetKind, TargetManifold, TubeConstants};

pub(crate) use target::{dot, gaussian};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point at distance {distance:.3e} from the target lies outside the tube of radius {tube:.3e}")]
    TubeViolation { distance: f64, tube: f64 },
    #[error("vector is not tangent to the target (normal residual {residual:.3e})")]
    NotTangent { residual: f64 },
    #[error(
        "points at geodesic distance {distance:.6} exceed the injectivity radius {injectivity:.6}"
    )]
    BeyondInjectivity { distance: f64, injectivity: f64 },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("inadmissible tube constants: {0}")]
    InvalidConstants(String),
}

/// Domain, target and the spectral plans shared by every field operation.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub domain: TorusDomain,
    pub target: TargetManifold,
    pub spectral: Spectral,
}

impl Geometry {
    pub fn new(domain: TorusDomain, target: TargetManifold) -> Self {
        let spectral = Spectral::new(&domain);
        Self {
            domain,
            target,
            spectral,
        }
    }

    pub fn q(&self) -> usize {
        self.target.ambient_dim()
    }

    pub fn nodes(&self) -> usize {
        self.domain.node_count()
    }

    pub fn cell_area(&self) -> f64 {
        self.domain.cell_area()
    }

    /// Spectral gradient of every ambient component: `grad[β][node * q + A]`.
    pub fn map_gradient(&self, u: &MapField) -> [Vec<f64>; 2] {
        let q = u.ambient_dim();
        let n = self.nodes();
        let mut g = [vec![0.0; n * q], vec![0.0; n * q]];
        for a in 0..q {
            let [d1, d2] = self.spectral.gradient(&u.component(a));
            for i in 0..n {
                g[0][i * q + a] = d1[i];
                g[1][i * q + a] = d2[i];
            }
        }
        g
    }

    /// Nodewise `|∇u|²`.
    pub fn gradient_density(&self, u: &MapField) -> Vec<f64> {
        let q = u.ambient_dim();
        let [g1, g2] = self.map_gradient(u);
        (0..self.nodes())
            .map(|i| {
                let r = i * q..(i + 1) * q;
                dot(&g1[r.clone()], &g1[r.clone()]) + dot(&g2[r.clone()], &g2[r])
            })
            .collect()
    }
}
