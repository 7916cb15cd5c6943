//! Near-zero spectrum of the twisted Dirac operator.

use std::io;
use std::path::Path;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::eigen::{apply_operator, hermitian_eigen, smallest_squared, BlockSolverOptions};
use super::operator::{free_dirac_raw, free_spectral_radius};
use super::{DiracError, DiracOperator, TwistedSpinorField, DENSE_LIMIT};
use crate::geometry::Geometry;

type C = Complex64;

/// Format tag written into spectrum reports and eigenvector dumps.
pub const SPECTRUM_FORMAT: &str = "dhflow-spectrum/1";

/// Default kernel threshold: `1e-6` times the free spectral radius.
pub fn default_kernel_tol(geometry: &Geometry) -> f64 {
    1e-6 * free_spectral_radius(geometry)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Dense when the operator was assembled densely, iterative otherwise.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Debug)]
pub struct SpectrumOptions {
    /// Number of eigenpairs nearest zero (the window is closed over clusters).
    pub count: usize,
    pub kernel_tol: f64,
    pub method: EigenMethod,
    /// Residual tolerance for `D²`, relative to the squared spectral radius.
    pub residual_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Starting block for the iterative solver, usually the previous basis.
    pub warm_start: Option<Mat<C>>,
}

impl SpectrumOptions {
    pub fn new(geometry: &Geometry, count: usize) -> Self {
        Self {
            count,
            kernel_tol: default_kernel_tol(geometry),
            method: EigenMethod::Auto,
            residual_tol: 1e-12,
            max_iter: 400,
            seed: 0x5eed,
            warm_start: None,
        }
    }
}

/// Eigenpairs nearest zero, sorted by `|λ|` (negative first on ties).
#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub format: &'static str,
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    pub gap: Option<f64>,
    pub kernel_tol: f64,
    pub kernel_parity_even: bool,
    /// `max |λ_i + λ_{n−1−i}|` over the ascending window.
    pub pairing_defect: f64,
    pub method: EigenMethod,
    pub iterations: usize,
    /// Eigenvectors with unit weighted L² norm, aligned with `eigenvalues`.
    #[serde(skip)]
    pub eigenvectors: Vec<TwistedSpinorField>,
    #[serde(skip)]
    basis: Option<Mat<C>>,
}

#[derive(Serialize, Deserialize)]
struct EigenvectorHeader {
    format: String,
    count: usize,
    nodes: usize,
    spinor_components: usize,
    ambient_dim: usize,
    layout: String,
    eigenvalues: Vec<f64>,
}

impl SpectralReport {
    fn build(
        mut pairs: Vec<(f64, TwistedSpinorField)>,
        gap_hint: Option<f64>,
        kernel_tol: f64,
        method: EigenMethod,
        iterations: usize,
        basis: Option<Mat<C>>,
    ) -> Self {
        pairs.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(a.0.total_cmp(&b.0)));
        let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let kernel_dim = eigenvalues.iter().filter(|l| l.abs() <= kernel_tol).count();
        let gap = eigenvalues
            .iter()
            .map(|l| l.abs())
            .find(|&l| l > kernel_tol)
            .or(gap_hint);
        let mut sorted = eigenvalues.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let pairing_defect = (0..n)
            .map(|i| (sorted[i] + sorted[n - 1 - i]).abs())
            .fold(0.0, f64::max);
        Self {
            format: SPECTRUM_FORMAT,
            eigenvalues,
            kernel_dim,
            gap,
            kernel_tol,
            kernel_parity_even: kernel_dim % 2 == 0,
            pairing_defect,
            method,
            iterations,
            eigenvectors: pairs.into_iter().map(|p| p.1).collect(),
            basis,
        }
    }

    /// Eigenvectors spanning the near-kernel `|λ| ≤ kernel_tol`.
    pub fn kernel_vectors(&self) -> &[TwistedSpinorField] {
        &self.eigenvectors[..self.kernel_dim]
    }

    pub fn is_minimal(&self) -> bool {
        self.kernel_dim == 2
    }

    /// Block to warm-start the next iterative solve.
    pub fn warm_start(&self) -> Option<&Mat<C>> {
        self.basis.as_ref()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialises")
    }

    /// Writes the eigenvectors as a JSON header line followed by interleaved
    /// (re, im) float64 values, row-major by eigenvector, node, spinor
    /// component and ambient index.
    pub fn write_eigenvectors(&self, path: &Path) -> io::Result<()> {
        let q = self.eigenvectors.first().map_or(1, |v| v.ambient_dim());
        let nodes = self.eigenvectors.first().map_or(0, |v| v.node_count());
        let header = EigenvectorHeader {
            format: SPECTRUM_FORMAT.into(),
            count: self.eigenvectors.len(),
            nodes,
            spinor_components: 2,
            ambient_dim: q,
            layout: "vector,node,spinor,ambient,re-im".into(),
            eigenvalues: self.eigenvalues.clone(),
        };
        let payload: Vec<f64> = self
            .eigenvectors
            .iter()
            .flat_map(|v| v.values().iter().flat_map(|z| [z.re, z.im]))
            .collect();
        crate::binio::write(path, &header, &payload)
    }

    /// Reads eigenvalues and eigenvectors written by [`Self::write_eigenvectors`].
    pub fn read_eigenvectors(path: &Path) -> io::Result<(Vec<f64>, Vec<TwistedSpinorField>)> {
        let (header, payload): (EigenvectorHeader, _) = crate::binio::read(path)?;
        let len = header.nodes * 2 * header.ambient_dim;
        if payload.len() != 2 * len * header.count {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "payload size mismatch",
            ));
        }
        let vectors = payload
            .chunks_exact(2 * len)
            .map(|chunk| {
                let values = chunk.chunks_exact(2).map(|c| C::new(c[0], c[1])).collect();
                TwistedSpinorField::from_values(header.ambient_dim, values)
            })
            .collect();
        Ok((header.eigenvalues, vectors))
    }
}

/// The `count` eigenpairs nearest zero with the default options.
pub fn compute_spectrum(
    op: &DiracOperator,
    count: usize,
    kernel_tol: f64,
) -> Result<SpectralReport, DiracError> {
    let mut opts = SpectrumOptions::new(op.geometry(), count);
    opts.kernel_tol = kernel_tol;
    compute_spectrum_with(op, &opts)
}

pub fn compute_spectrum_with(
    op: &DiracOperator,
    opts: &SpectrumOptions,
) -> Result<SpectralReport, DiracError> {
    if opts.count < 4 || opts.kernel_tol <= 0.0 {
        return Err(DiracError::EigensolveFailure(
            "need at least 4 eigenpairs and a positive kernel threshold".into(),
        ));
    }
    let dense = match opts.method {
        EigenMethod::Auto => op.dense().is_some(),
        EigenMethod::Dense => true,
        EigenMethod::Iterative => false,
    };
    if dense {
        return dense_spectrum(op, opts);
    }
    match iterative_spectrum(op, opts) {
        // Near-kernel modes at the grid scale converge poorly under the
        // low-pass preconditioner; small operators fall back to a dense solve.
        Err(DiracError::EigensolveFailure(_))
            if opts.method == EigenMethod::Auto && op.dim() <= DENSE_LIMIT =>
        {
            dense_spectrum(op, opts)
        }
        other => other,
    }
}

/// Every eigenvalue of the free operator `∂̸` on the grid, sorted by `|λ|`
/// (negative first on ties), from a dense eigensolve.
pub fn free_spectrum(geometry: &Geometry) -> Result<Vec<f64>, DiracError> {
    let n = 2 * geometry.nodes();
    let mut m = Mat::<C>::zeros(n, n);
    let mut e = vec![C::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C::new(1.0, 0.0);
        for (i, v) in free_dirac_raw(geometry, &e, 1).into_iter().enumerate() {
            m[(i, j)] = v;
        }
        e[j] = C::new(0.0, 0.0);
    }
    let m = Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
    let mut values = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| DiracError::EigensolveFailure(format!("{e:?}")))?;
    values.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    Ok(values)
}

fn to_field(op: &DiracOperator, m: &Mat<C>, j: usize) -> TwistedSpinorField {
    let w = 1.0 / op.geometry().cell_area().sqrt();
    let values = (0..m.nrows()).map(|i| m[(i, j)] * w).collect();
    TwistedSpinorField::from_values(op.geometry().q(), values)
}

fn same_cluster(a: f64, b: f64, kernel_tol: f64) -> bool {
    (a <= kernel_tol && b <= kernel_tol) || (b - a).abs() <= 1e-8 * a.abs().max(1.0)
}

fn dense_spectrum(
    op: &DiracOperator,
    opts: &SpectrumOptions,
) -> Result<SpectralReport, DiracError> {
    let owned;
    let matrix = match op.dense() {
        Some(m) => m,
        None => {
            owned = op.to_dense();
            &owned
        }
    };
    let (values, vectors) = hermitian_eigen(matrix.as_ref())?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()));
    let mut take = opts.count.min(order.len());
    while take < order.len()
        && same_cluster(
            values[order[take - 1]].abs(),
            values[order[take]].abs(),
            opts.kernel_tol,
        )
    {
        take += 1;
    }
    let pairs = order[..take]
        .iter()
        .map(|&j| (values[j], to_field(op, &vectors, j)))
        .collect();
    let gap_hint = order[take..]
        .iter()
        .map(|&j| values[j].abs())
        .find(|&l| l > opts.kernel_tol);
    Ok(SpectralReport::build(
        pairs,
        gap_hint,
        opts.kernel_tol,
        EigenMethod::Dense,
        0,
        None,
    ))
}

fn iterative_spectrum(
    op: &DiracOperator,
    opts: &SpectrumOptions,
) -> Result<SpectralReport, DiracError> {
    let radius = free_spectral_radius(op.geometry());
    let scale = radius * radius;
    let solver = BlockSolverOptions {
        block: opts.count + (opts.count / 2).max(4),
        count: opts.count,
        tol: opts.residual_tol * scale,
        value_tol: 1e-4,
        kernel_tol: opts.kernel_tol,
        max_iter: opts.max_iter,
        patience: 20,
        seed: opts.seed,
    };
    let sq = smallest_squared(op, opts.warm_start.as_ref(), &solver)?;
    let cut = sq.cut;
    let xc = Mat::from_fn(sq.vectors.nrows(), cut, |i, j| sq.vectors[(i, j)]);
    let dx = apply_operator(op, &xc);
    let h = xc.adjoint() * &dx;
    let h = Mat::from_fn(cut, cut, |i, j| 0.5 * (h[(i, j)] + h[(j, i)].conj()));
    let (lambda, c) = hermitian_eigen(h.as_ref())?;
    let ritz = &xc * &c;
    let pairs = (0..cut)
        .map(|j| (lambda[j], to_field(op, &ritz, j)))
        .collect();
    let gap_hint = Some(sq.theta[cut].max(0.0).sqrt()).filter(|&l| l > opts.kernel_tol);
    Ok(SpectralReport::build(
        pairs,
        gap_hint,
        opts.kernel_tol,
        EigenMethod::Iterative,
        sq.iterations,
        Some(sq.vectors),
    ))
}
