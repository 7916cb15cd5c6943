//! Clifford multiplication on `ℂ²` with `e₁ ↦ iσ₁`, `e₂ ↦ iσ₂`.

use num_complex::Complex64;

type C = Complex64;

/// `e_β · s` for `β ∈ {1, 2}`.
///
/// Skew-adjoint and squares to `−1`; `e₁` and `e₂` anticommute.
pub fn clifford_mul(beta: usize, s: [C; 2]) -> [C; 2] {
    let i = C::new(0.0, 1.0);
    match beta {
        1 => [i * s[1], i * s[0]],
        2 => [s[1], -s[0]],
        _ => panic!("Clifford direction must be 1 or 2, got {beta}"),
    }
}

/// `v · s = v₁ e₁·s + v₂ e₂·s` for a real tangent vector `v` of the surface.
pub fn clifford_vec(v: [f64; 2], s: [C; 2]) -> [C; 2] {
    let a = clifford_mul(1, s);
    let b = clifford_mul(2, s);
    [a[0] * v[0] + b[0] * v[1], a[1] * v[0] + b[1] * v[1]]
}

#[cfg(test)]
pub(crate) fn inner(a: [C; 2], b: [C; 2]) -> C {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}
