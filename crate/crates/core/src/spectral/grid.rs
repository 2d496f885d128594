use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Periodic Fourier discretization of the 1D torus or the 2D torus.
///
/// Samples sit at `x_j = j L / N`, `j = 0..N`. Spectral arrays use the
/// FFT-native layout: storage index `i` carries the integer mode
/// `j = i` for `i <= N/2` and `j = i - N` otherwise, so the Nyquist mode is
/// `+N/2`. In 2D the storage is row-major with axis 0 (x₁) as the slow index.
///
/// Coefficients are normalized so that `u(x_j) = Σ_k û_k e^{i k x_j}`.
#[derive(Clone)]
pub struct SpectralGrid {
    dim: usize,
    n: [usize; 2],
    length: [f64; 2],
    wavenumbers: [Vec<f64>; 2],
    mask: [Vec<bool>; 2],
    forward: [Arc<dyn Fft<f64>>; 2],
    inverse: [Arc<dyn Fft<f64>>; 2],
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("dim", &self.dim)
            .field("n", &&self.n[..self.dim])
            .field("length", &&self.length[..self.dim])
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

/// Integer mode number stored at FFT index `i` of an `n`-point transform.
#[inline]
pub fn mode_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Storage index of integer mode `j` in an `n`-point transform.
#[inline]
pub fn storage_index(j: i64, n: usize) -> usize {
    j.rem_euclid(n as i64) as usize
}

fn validate(n: usize, length: f64) -> Result<()> {
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::InvalidGrid(format!(
            "N = {n} must be a power of two and at least 16"
        )));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidGrid(format!("L = {length} must be positive")));
    }
    Ok(())
}

impl SpectralGrid {
    /// `make_grid(dim, N, L)`: same `N` and `L` along every axis.
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        match dim {
            1 => Self::new_1d(n, length),
            2 => Self::new_2d(n, length, n, length),
            _ => Err(Error::InvalidGrid(format!("dim = {dim} must be 1 or 2"))),
        }
    }

    pub fn new_1d(n: usize, length: f64) -> Result<Self> {
        validate(n, length)?;
        Ok(Self::build(1, [n, 1], [length, 1.0]))
    }

    pub fn new_2d(n0: usize, l0: f64, n1: usize, l1: f64) -> Result<Self> {
        validate(n0, l0)?;
        validate(n1, l1)?;
        Ok(Self::build(2, [n0, n1], [l0, l1]))
    }

    fn build(dim: usize, n: [usize; 2], length: [f64; 2]) -> Self {
        let mut planner = FftPlanner::new();
        let axis = |a: usize| {
            let base = 2.0 * PI / length[a];
            let cutoff = (n[a] / 3) as i64;
            let k: Vec<f64> = (0..n[a])
                .map(|i| base * mode_index(i, n[a]) as f64)
                .collect();
            let m: Vec<bool> = (0..n[a])
                .map(|i| mode_index(i, n[a]).abs() <= cutoff)
                .collect();
            (k, m)
        };
        let (k0, m0) = axis(0);
        let (k1, m1) = if dim == 2 {
            axis(1)
        } else {
            (vec![0.0], vec![true])
        };
        let forward = [planner.plan_fft_forward(n[0]), planner.plan_fft_forward(n[1])];
        let inverse = [planner.plan_fft_inverse(n[0]), planner.plan_fft_inverse(n[1])];
        SpectralGrid {
            dim,
            n,
            length,
            wavenumbers: [k0, k1],
            mask: [m0, m1],
            forward,
            inverse,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points along `axis`.
    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    /// Domain length along `axis`.
    pub fn length(&self, axis: usize) -> f64 {
        self.length[axis]
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.length[axis] / self.n[axis] as f64
    }

    /// Volume element of the trapezoid rule, `Π L/N`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Measure of the torus, `Π L`.
    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.length[a]).product()
    }

    /// First eigenvalue of `-∂ₓₓ` on axis 0, `(2π/L)²`.
    pub fn lambda1(&self) -> f64 {
        (2.0 * PI / self.length[0]).powi(2)
    }

    /// Wavenumbers of `axis` in FFT-native order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    /// 2/3-rule mask of `axis` in FFT-native order.
    pub fn mask_axis(&self, axis: usize) -> &[bool] {
        &self.mask[axis]
    }

    /// Largest retained mode number, `floor(N/3)`.
    pub fn cutoff(&self, axis: usize) -> usize {
        self.n[axis] / 3
    }

    /// Physical coordinate of sample `i` along `axis`.
    pub fn x(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.spacing(axis)
    }

    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.x(axis, i)).collect()
    }

    /// Flat index → (axis-0 index, axis-1 index).
    #[inline]
    pub fn split(&self, flat: usize) -> (usize, usize) {
        (flat / self.n[1], flat % self.n[1])
    }

    /// Wavevector at flat spectral index.
    #[inline]
    pub fn wavevector(&self, flat: usize) -> (f64, f64) {
        let (i0, i1) = self.split(flat);
        (self.wavenumbers[0][i0], self.wavenumbers[1][i1])
    }

    /// Integer mode numbers at flat spectral index.
    #[inline]
    pub fn modes(&self, flat: usize) -> (i64, i64) {
        let (i0, i1) = self.split(flat);
        (mode_index(i0, self.n[0]), mode_index(i1, self.n[1]))
    }

    /// `|k|²` at flat spectral index.
    #[inline]
    pub fn k_squared(&self, flat: usize) -> f64 {
        let (a, b) = self.wavevector(flat);
        a * a + b * b
    }

    /// Whether the mode at flat index survives the 2/3 rule.
    #[inline]
    pub fn keeps(&self, flat: usize) -> bool {
        let (i0, i1) = self.split(flat);
        self.mask[0][i0] && self.mask[1][i1]
    }

    /// Dense 2/3-rule mask over flat spectral indices.
    pub fn dealias_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|f| self.keeps(f)).collect()
    }

    /// Whether the mode at flat index is a Nyquist mode on some axis.
    #[inline]
    pub fn is_nyquist(&self, flat: usize, axis: usize) -> bool {
        let (i0, i1) = self.split(flat);
        let i = if axis == 0 { i0 } else { i1 };
        self.dim > axis && i == self.n[axis] / 2
    }

    /// In-place forward transform, physical samples → coefficients (scaled by 1/N).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, true);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// In-place inverse transform, coefficients → physical samples.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        debug_assert_eq!(data.len(), self.len());
        let plans = if forward { &self.forward } else { &self.inverse };
        if self.dim == 1 {
            plans[0].process(data);
            return;
        }
        let (n0, n1) = (self.n[0], self.n[1]);
        // rows are contiguous along axis 1
        plans[1].process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); n0];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plans[0].get_inplace_scratch_len()];
        for c in 0..n1 {
            for r in 0..n0 {
                column[r] = data[r * n1 + c];
            }
            plans[0].process_with_scratch(&mut column, &mut scratch);
            for r in 0..n0 {
                data[r * n1 + c] = column[r];
            }
        }
    }

    /// Zero every mode outside the 2/3-rule mask.
    pub fn apply_mask(&self, coeffs: &mut [Complex64]) {
        if self.dim == 1 {
            for (c, &keep) in coeffs.iter_mut().zip(&self.mask[0]) {
                if !keep {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        } else {
            for (f, c) in coeffs.iter_mut().enumerate() {
                if !self.keeps(f) {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
}
