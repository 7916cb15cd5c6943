//! Flat spin tori.

use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Boundary condition of spinors along one generator of the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Antiperiodic,
}

impl Boundary {
    /// Half-integer frequency shift carried by this boundary condition.
    pub fn shift(self) -> f64 {
        match self {
            Boundary::Periodic => 0.0,
            Boundary::Antiperiodic => 0.5,
        }
    }
}

/// One of the four spin structures of the 2-torus, given by a boundary
/// condition per generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinStructure(pub Boundary, pub Boundary);

impl SpinStructure {
    /// Periodic in both directions; the only structure with harmonic spinors
    /// on the flat torus.
    pub const TRIVIAL: SpinStructure = SpinStructure(Boundary::Periodic, Boundary::Periodic);
    pub const ANTIPERIODIC: SpinStructure =
        SpinStructure(Boundary::Antiperiodic, Boundary::Antiperiodic);

    pub fn all() -> [SpinStructure; 4] {
        use Boundary::*;
        [
            SpinStructure(Periodic, Periodic),
            SpinStructure(Periodic, Antiperiodic),
            SpinStructure(Antiperiodic, Periodic),
            SpinStructure(Antiperiodic, Antiperiodic),
        ]
    }

    pub fn shift(self) -> [f64; 2] {
        [self.0.shift(), self.1.shift()]
    }
}

impl Default for SpinStructure {
    fn default() -> Self {
        Self::TRIVIAL
    }
}

/// Uniform grid on the flat torus `[0, L1) x [0, L2)`.
///
/// Nodes are stored row-major: node `(i1, i2)` has linear index `i1 * n2 + i2`,
/// with `i1` running along the first generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusDomain {
    n1: usize,
    n2: usize,
    l1: f64,
    l2: f64,
    spin: SpinStructure,
}

impl TorusDomain {
    pub fn new(
        n1: usize,
        n2: usize,
        l1: f64,
        l2: f64,
        spin: SpinStructure,
    ) -> Result<Self, GeometryError> {
        for n in [n1, n2] {
            if n < 4 || n % 2 != 0 {
                return Err(GeometryError::InvalidDomain(format!(
                    "grid resolution must be even and at least 4, got {n}"
                )));
            }
        }
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(GeometryError::InvalidDomain(format!(
                "side lengths must be positive, got ({l1}, {l2})"
            )));
        }
        Ok(Self {
            n1,
            n2,
            l1,
            l2,
            spin,
        })
    }

    /// `n x n` grid on the square torus of side `2π`.
    pub fn square(n: usize, spin: SpinStructure) -> Result<Self, GeometryError> {
        let side = 2.0 * std::f64::consts::PI;
        Self::new(n, n, side, side, spin)
    }

    pub fn with_spin(&self, spin: SpinStructure) -> Self {
        Self {
            spin,
            ..self.clone()
        }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.n1, self.n2]
    }

    pub fn lengths(&self) -> [f64; 2] {
        [self.l1, self.l2]
    }

    pub fn spin(&self) -> SpinStructure {
        self.spin
    }

    pub fn node_count(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn spacing(&self) -> [f64; 2] {
        [self.l1 / self.n1 as f64, self.l2 / self.n2 as f64]
    }

    /// Quadrature weight of every node.
    pub fn cell_area(&self) -> f64 {
        self.area() / self.node_count() as f64
    }

    pub fn area(&self) -> f64 {
        self.l1 * self.l2
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        (i1 % self.n1) * self.n2 + (i2 % self.n2)
    }

    pub fn grid_position(&self, node: usize) -> (usize, usize) {
        (node / self.n2, node % self.n2)
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let (i1, i2) = self.grid_position(node);
        let [h1, h2] = self.spacing();
        [i1 as f64 * h1, i2 as f64 * h2]
    }

    /// Geodesic distance between two nodes on the flat torus.
    pub fn torus_distance(&self, a: usize, b: usize) -> f64 {
        let pa = self.coords(a);
        let pb = self.coords(b);
        let mut sq = 0.0;
        for (d, len) in [(pa[0] - pb[0], self.l1), (pa[1] - pb[1], self.l2)] {
            let d = d.abs() % len;
            let d = d.min(len - d);
            sq += d * d;
        }
        sq.sqrt()
    }
}
