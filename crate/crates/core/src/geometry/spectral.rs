//! Fourier-spectral calculus on the periodic grid.
//!
//! Real fields (maps) are differentiated with the Nyquist mode of odd-order
//! derivatives removed so that derivatives of real data stay real. Complex
//! fields (spinors) keep the full frequency window `k in [-n/2, n/2)`, shifted
//! by `1/2` in antiperiodic directions; this keeps the first-derivative
//! multiplier purely imaginary and free of spurious zero modes.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::TorusDomain;

type C = Complex64;

#[derive(Clone)]
pub struct Spectral {
    n: [usize; 2],
    lengths: [f64; 2],
    forward: [Arc<dyn Fft<f64>>; 2],
    inverse: [Arc<dyn Fft<f64>>; 2],
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral")
            .field("n", &self.n)
            .field("lengths", &self.lengths)
            .finish()
    }
}

impl Spectral {
    pub fn new(domain: &TorusDomain) -> Self {
        let mut planner = FftPlanner::new();
        let [n1, n2] = domain.shape();
        Self {
            n: [n1, n2],
            lengths: domain.lengths(),
            forward: [planner.plan_fft_forward(n1), planner.plan_fft_forward(n2)],
            inverse: [planner.plan_fft_inverse(n1), planner.plan_fft_inverse(n2)],
        }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Signed integer frequency of FFT bin `index` along `axis`.
    fn frequency(&self, axis: usize, index: usize) -> f64 {
        let n = self.n[axis];
        if index < n / 2 {
            index as f64
        } else {
            index as f64 - n as f64
        }
    }

    fn is_nyquist(&self, axis: usize, index: usize) -> bool {
        index == self.n[axis] / 2
    }

    /// Angular wavenumber `2π(k + s)/L` of bin `index`.
    pub fn wavenumber(&self, axis: usize, index: usize, shift: f64) -> f64 {
        2.0 * PI * (self.frequency(axis, index) + shift) / self.lengths[axis]
    }

    /// Largest `|κ|` in the frequency window for the given shift.
    pub fn max_wavenumber(&self, shift: [f64; 2]) -> f64 {
        let mut sq = 0.0;
        for axis in 0..2 {
            let n = self.n[axis];
            let m = (0..n)
                .map(|i| self.wavenumber(axis, i, shift[axis]).abs())
                .fold(0.0, f64::max);
            sq += m * m;
        }
        sq.sqrt()
    }

    fn fft2(&self, data: &mut [C], inverse: bool) {
        let [n1, n2] = self.n;
        debug_assert_eq!(data.len(), n1 * n2);
        let plans = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        plans[1].process(data);
        let mut column = vec![C::new(0.0, 0.0); n1];
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                column[i1] = data[i1 * n2 + i2];
            }
            plans[0].process(&mut column);
            for i1 in 0..n1 {
                data[i1 * n2 + i2] = column[i1];
            }
        }
        if inverse {
            let scale = 1.0 / (n1 * n2) as f64;
            data.iter_mut().for_each(|z| *z *= scale);
        }
    }

    fn twist(&self, data: &mut [C], shift: [f64; 2], sign: f64) {
        if shift == [0.0, 0.0] {
            return;
        }
        let [n1, n2] = self.n;
        for i1 in 0..n1 {
            let a1 = 2.0 * PI * shift[0] * i1 as f64 / n1 as f64;
            for i2 in 0..n2 {
                let a2 = 2.0 * PI * shift[1] * i2 as f64 / n2 as f64;
                data[i1 * n2 + i2] *= C::from_polar(1.0, sign * (a1 + a2));
            }
        }
    }

    /// Forward transform of a field with the given boundary shift (the
    /// antiperiodic phase is removed first).
    pub fn forward(&self, data: &mut [C], shift: [f64; 2]) {
        self.twist(data, shift, -1.0);
        self.fft2(data, false);
    }

    /// Inverse of [`Spectral::forward`].
    pub fn inverse(&self, data: &mut [C], shift: [f64; 2]) {
        self.fft2(data, true);
        self.twist(data, shift, 1.0);
    }

    /// Iterates over `(linear bin index, κ1, κ2)`.
    pub fn modes(&self, shift: [f64; 2]) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let [n1, n2] = self.n;
        (0..n1).flat_map(move |i1| {
            (0..n2).map(move |i2| {
                (
                    i1 * n2 + i2,
                    self.wavenumber(0, i1, shift[0]),
                    self.wavenumber(1, i2, shift[1]),
                )
            })
        })
    }

    /// Both partial derivatives of a complex field with boundary shift.
    pub fn derivatives_complex(&self, f: &[C], shift: [f64; 2]) -> [Vec<C>; 2] {
        let mut hat = f.to_vec();
        self.forward(&mut hat, shift);
        let mut d1 = hat.clone();
        let mut d2 = hat;
        for (idx, k1, k2) in self.modes(shift) {
            d1[idx] *= C::new(0.0, k1);
            d2[idx] *= C::new(0.0, k2);
        }
        self.inverse(&mut d1, shift);
        self.inverse(&mut d2, shift);
        [d1, d2]
    }

    fn real_to_hat(&self, f: &[f64]) -> Vec<C> {
        let mut hat: Vec<C> = f.iter().map(|&x| C::new(x, 0.0)).collect();
        self.fft2(&mut hat, false);
        hat
    }

    fn hat_to_real(&self, mut hat: Vec<C>) -> Vec<f64> {
        self.fft2(&mut hat, true);
        hat.into_iter().map(|z| z.re).collect()
    }

    /// Multiplier of a first derivative of a real field along `axis`
    /// (zero at the Nyquist bin).
    fn real_first(&self, axis: usize, index: usize) -> f64 {
        if self.is_nyquist(axis, index) {
            0.0
        } else {
            self.wavenumber(axis, index, 0.0)
        }
    }

    /// Spectral gradient of a real periodic field.
    pub fn gradient(&self, f: &[f64]) -> [Vec<f64>; 2] {
        let hat = self.real_to_hat(f);
        let [n1, n2] = self.n;
        let mut d1 = hat.clone();
        let mut d2 = hat;
        for i1 in 0..n1 {
            let k1 = self.real_first(0, i1);
            for i2 in 0..n2 {
                let k2 = self.real_first(1, i2);
                d1[i1 * n2 + i2] *= C::new(0.0, k1);
                d2[i1 * n2 + i2] *= C::new(0.0, k2);
            }
        }
        [self.hat_to_real(d1), self.hat_to_real(d2)]
    }

    /// Second derivatives `(∂11, ∂12, ∂22)` of a real periodic field.
    pub fn second_derivatives(&self, f: &[f64]) -> [Vec<f64>; 3] {
        let hat = self.real_to_hat(f);
        let [n1, n2] = self.n;
        let mut d11 = hat.clone();
        let mut d12 = hat.clone();
        let mut d22 = hat;
        for i1 in 0..n1 {
            let k1 = self.wavenumber(0, i1, 0.0);
            let m1 = self.real_first(0, i1);
            for i2 in 0..n2 {
                let k2 = self.wavenumber(1, i2, 0.0);
                let m2 = self.real_first(1, i2);
                let idx = i1 * n2 + i2;
                d11[idx] *= -k1 * k1;
                d12[idx] *= -m1 * m2;
                d22[idx] *= -k2 * k2;
            }
        }
        [
            self.hat_to_real(d11),
            self.hat_to_real(d12),
            self.hat_to_real(d22),
        ]
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.apply_radial(f, |k2| -k2)
    }

    /// Solves `(1 - dt Δ) g = f` exactly in Fourier space.
    pub fn solve_heat(&self, f: &[f64], dt: f64) -> Vec<f64> {
        self.apply_radial(f, |k2| 1.0 / (1.0 + dt * k2))
    }

    fn apply_radial(&self, f: &[f64], symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut hat = self.real_to_hat(f);
        for (idx, k1, k2) in self.modes([0.0, 0.0]) {
            hat[idx] *= symbol(k1 * k1 + k2 * k2);
        }
        self.hat_to_real(hat)
    }
}
