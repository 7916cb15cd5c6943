//! Dense Hermitian eigensolves and a preconditioned block solver (LOBPCG) for
//! the smallest eigenvalues of `D²` restricted to tangent coefficients.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiracError, DiracOperator};
use crate::geometry::gaussian;

type C = Complex64;

/// Eigenvalues (ascending) and column eigenvectors of a Hermitian matrix.
pub(crate) fn hermitian_eigen(m: MatRef<'_, C>) -> Result<(Vec<f64>, Mat<C>), DiracError> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| DiracError::EigensolveFailure(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..m.nrows()).map(|i| s[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

fn hermitize(m: &Mat<C>) -> Mat<C> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        0.5 * (m[(i, j)] + m[(j, i)].conj())
    })
}

/// Orthonormal basis of the column span via scaled Gram-eigendecomposition
/// (SVQB). Directions whose Gram eigenvalue falls below `drop` times the
/// largest are discarded.
fn svqb(s: &Mat<C>, drop: f64) -> Result<Mat<C>, DiracError> {
    let keep: Vec<usize> = (0..s.ncols())
        .filter(|&j| s.col(j).norm_l2() > 0.0)
        .collect();
    let s = Mat::from_fn(s.nrows(), keep.len(), |i, j| s[(i, keep[j])]);
    let d: Vec<f64> = (0..s.ncols()).map(|j| 1.0 / s.col(j).norm_l2()).collect();
    let scaled = Mat::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * d[j]);
    let gram = hermitize(&(scaled.adjoint() * &scaled));
    let (vals, vecs) = hermitian_eigen(gram.as_ref())?;
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] > drop * top).collect();
    let coeff = Mat::from_fn(vecs.nrows(), cols.len(), |i, j| {
        vecs[(i, cols[j])] / vals[cols[j]].sqrt()
    });
    Ok(&scaled * &coeff)
}

fn orthonormalize(s: &Mat<C>) -> Result<Mat<C>, DiracError> {
    let once = svqb(s, 1e-13)?;
    svqb(&once, 1e-13)
}

fn concat(blocks: &[&Mat<C>]) -> Mat<C> {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::<C>::zeros(rows, cols);
    let mut o = 0;
    for b in blocks {
        for j in 0..b.ncols() {
            for i in 0..rows {
                out[(i, o + j)] = b[(i, j)];
            }
        }
        o += b.ncols();
    }
    out
}

fn select(m: &Mat<C>, cols: &[usize]) -> Mat<C> {
    Mat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

fn apply_columns(m: &Mat<C>, f: impl Fn(&[C]) -> Vec<C>) -> Mat<C> {
    let mut out = Mat::<C>::zeros(m.nrows(), m.ncols());
    let mut buf = vec![C::new(0.0, 0.0); m.nrows()];
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            buf[i] = m[(i, j)];
        }
        for (i, v) in f(&buf).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// `D` applied to each column.
pub(crate) fn apply_operator(op: &DiracOperator, m: &Mat<C>) -> Mat<C> {
    apply_columns(m, |x| op.apply(x))
}

fn apply_squared(op: &DiracOperator, m: &Mat<C>) -> Mat<C> {
    apply_columns(m, |x| op.apply(&op.apply(x)))
}

/// `Π F⁻¹ (|κ|² + σ)⁻¹ F Π`, applied per ambient coefficient.
fn precondition(op: &DiracOperator, m: &Mat<C>, sigma: f64) -> Mat<C> {
    let geometry = op.geometry();
    let q = geometry.q();
    let n = geometry.nodes();
    let shift = geometry.domain.spin().shift();
    let weights: Vec<(usize, f64)> = geometry
        .spectral
        .modes(shift)
        .map(|(idx, k1, k2)| (idx, 1.0 / (k1 * k1 + k2 * k2 + sigma)))
        .collect();
    apply_columns(m, |x| {
        let mut x = x.to_vec();
        op.project_tangent(&mut x);
        let mut buf = vec![C::new(0.0, 0.0); n];
        for s in 0..2 {
            for a in 0..q {
                for node in 0..n {
                    buf[node] = x[(node * 2 + s) * q + a];
                }
                geometry.spectral.forward(&mut buf, shift);
                for &(idx, w) in &weights {
                    buf[idx] *= w;
                }
                geometry.spectral.inverse(&mut buf, shift);
                for node in 0..n {
                    x[(node * 2 + s) * q + a] = buf[node];
                }
            }
        }
        op.project_tangent(&mut x);
        x
    })
}

/// Largest `c ≤ count` such that `√θ_{c−1}` and `√θ_c` belong to different
/// clusters (see [`is_boundary`]).
pub(crate) fn cluster_cut(theta: &[f64], count: usize, kernel_tol: f64) -> Option<usize> {
    let mags: Vec<f64> = theta.iter().map(|t| t.max(0.0).sqrt()).collect();
    (1..=count.min(mags.len() - 1))
        .rev()
        .find(|&c| is_boundary(mags[c - 1], mags[c], kernel_tol))
}

/// Magnitudes `a ≤ b` are in different clusters when only `a` lies within
/// `kernel_tol`, or when both lie beyond it and differ by a relative `1e-3`.
fn is_boundary(a: f64, b: f64, kernel_tol: f64) -> bool {
    if a <= kernel_tol {
        b > kernel_tol
    } else {
        b - a > 1e-3 * b
    }
}

/// Largest cluster boundary `c ≤ count` with every pair below `c` converged
/// and the Ritz value at `c` settled.
fn converged_cut(theta: &[f64], residuals: &[f64], opts: &BlockSolverOptions) -> Option<usize> {
    let mags: Vec<f64> = theta.iter().map(|t| t.max(0.0).sqrt()).collect();
    (1..=opts.count.min(mags.len() - 1)).rev().find(|&c| {
        is_boundary(mags[c - 1], mags[c], opts.kernel_tol)
            && residuals[..c].iter().all(|&r| r <= opts.tol)
            && residuals[c] <= opts.value_tol * theta[c].abs() + opts.tol
    })
}

/// Result of the block solver for `D²` on tangent coefficients.
pub(crate) struct SquaredPairs {
    /// Ritz values of `D²`, ascending.
    pub theta: Vec<f64>,
    /// Orthonormal (Euclidean) Ritz vectors as columns.
    pub vectors: Mat<C>,
    /// Leading complete clusters: pairs `..cut` are converged to the full
    /// tolerance, pair `cut` only well enough to fix its Ritz value.
    pub cut: usize,
    pub iterations: usize,
}

pub(crate) struct BlockSolverOptions {
    /// Block width.
    pub block: usize,
    /// Upper bound for the number of fully converged pairs.
    pub count: usize,
    /// Absolute residual tolerance on `D²` for vectors inside the cut.
    pub tol: f64,
    /// Relative tolerance for the first pair past the cut, whose Ritz value
    /// (the gap) is needed but whose vector is not.
    pub value_tol: f64,
    /// Magnitudes `√θ` below this are treated as one cluster.
    pub kernel_tol: f64,
    pub max_iter: usize,
    /// Extra iterations granted, after the first converged cluster, for the
    /// window to fill up to `count`.
    pub patience: usize,
    pub seed: u64,
}

/// Smallest eigenpairs of `D²` on the tangent subspace by LOBPCG.
pub(crate) fn smallest_squared(
    op: &DiracOperator,
    warm: Option<&Mat<C>>,
    opts: &BlockSolverOptions,
) -> Result<SquaredPairs, DiracError> {
    let dim = op.dim();
    let m = opts.block;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x0 = Mat::<C>::zeros(dim, m);
    let warm_cols = warm.map_or(0, |w| w.ncols().min(m));
    for j in 0..m {
        for i in 0..dim {
            x0[(i, j)] = if j < warm_cols {
                warm.unwrap()[(i, j)]
            } else {
                C::new(gaussian(&mut rng), gaussian(&mut rng))
            };
        }
        // Tiny random admixture keeps warm columns from being rank deficient.
        if j < warm_cols {
            let scale = 1e-8 * x0.col(j).norm_l2().max(1e-300);
            for i in 0..dim {
                x0[(i, j)] += C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * scale;
            }
        }
    }
    let x0 = apply_columns(&x0, |x| {
        let mut x = x.to_vec();
        op.project_tangent(&mut x);
        x
    });
    let mut x = orthonormalize(&x0)?;
    if x.ncols() < m {
        return Err(DiracError::EigensolveFailure(
            "degenerate start block".into(),
        ));
    }
    let mut bx = apply_squared(op, &x);
    let (mut theta, c) = hermitian_eigen(hermitize(&(x.adjoint() * &bx)).as_ref())?;
    x = &x * &c;
    bx = &bx * &c;
    let geometry = op.geometry();
    let sigma = {
        let [l1, l2] = geometry.domain.lengths();
        let k = 2.0 * std::f64::consts::PI / l1.max(l2);
        k * k
    };
    let mut p: Option<Mat<C>> = None;
    let mut residuals = vec![f64::INFINITY; m];
    let mut first_success: Option<usize> = None;
    for iter in 0..opts.max_iter {
        let mut r = bx.clone();
        for j in 0..m {
            for i in 0..dim {
                r[(i, j)] -= x[(i, j)] * theta[j];
            }
            residuals[j] = r.col(j).norm_l2();
        }
        let converged = converged_cut(&theta, &residuals, opts);
        if let Some(cut) = converged {
            first_success.get_or_insert(iter);
            let complete = cluster_cut(&theta, opts.count, opts.kernel_tol) == Some(cut);
            if complete || iter >= first_success.unwrap_or(iter) + opts.patience {
                return Ok(SquaredPairs {
                    theta,
                    vectors: x,
                    cut,
                    iterations: iter,
                });
            }
        }
        let active: Vec<usize> = (0..m).filter(|&j| residuals[j] > opts.tol).collect();
        let w = precondition(op, &select(&r, &active), sigma);
        let s = match &p {
            Some(p) => concat(&[&x, &w, &select(p, &active)]),
            None => concat(&[&x, &w]),
        };
        let s = orthonormalize(&s)?;
        if s.ncols() < m {
            return Err(DiracError::EigensolveFailure(
                "search space collapsed".into(),
            ));
        }
        let bs = apply_squared(op, &s);
        let (vals, c) = hermitian_eigen(hermitize(&(s.adjoint() * &bs)).as_ref())?;
        let c = Mat::from_fn(c.nrows(), m, |i, j| c[(i, j)]);
        let xn = &s * &c;
        let bxn = &bs * &c;
        let overlap = x.adjoint() * &xn;
        p = Some(&xn - &x * &overlap);
        x = xn;
        bx = bxn;
        theta = vals[..m].to_vec();
    }
    Err(DiracError::EigensolveFailure(format!(
        "block solver did not converge in {} iterations (worst residual {:.3e}, tolerance {:.3e})",
        opts.max_iter,
        residuals[..opts.count].iter().cloned().fold(0.0, f64::max),
        opts.tol
    )))
}
