use std::sync::Arc;

use num_complex::Complex64;

use super::grid::SpectralGrid;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    Real,
    Complex,
}

impl ScalarKind {
    pub fn name(self) -> &'static str {
        match self {
            ScalarKind::Real => "real",
            ScalarKind::Complex => "complex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Physical,
    Spectral,
}

/// A periodic grid function, real or complex, held either as samples or as
/// Fourier coefficients.
///
/// Real fields are stored in complex buffers; their physical samples have
/// zero imaginary part and their coefficients are conjugate symmetric.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<SpectralGrid>,
    kind: ScalarKind,
    repr: Representation,
    zero_mean: bool,
    data: Vec<Complex64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.kind == other.kind
            && self.repr == other.repr
            && self.zero_mean == other.zero_mean
            && self.data == other.data
    }
}

impl Field {
    pub fn zeros(grid: &Arc<SpectralGrid>, kind: ScalarKind) -> Field {
        Field {
            grid: grid.clone(),
            kind,
            repr: Representation::Spectral,
            zero_mean: false,
            data: vec![ZERO; grid.len()],
        }
    }

    pub fn from_real(grid: &Arc<SpectralGrid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            kind: ScalarKind::Real,
            repr: Representation::Physical,
            zero_mean: false,
            data: values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        })
    }

    pub fn from_complex(grid: &Arc<SpectralGrid>, values: Vec<Complex64>) -> Result<Field> {
        Self::from_raw(grid, ScalarKind::Complex, Representation::Physical, values)
    }

    /// Build a field from FFT-native coefficients.
    pub fn from_spectral(
        grid: &Arc<SpectralGrid>,
        kind: ScalarKind,
        coeffs: Vec<Complex64>,
    ) -> Result<Field> {
        Self::from_raw(grid, kind, Representation::Spectral, coeffs)
    }

    pub fn from_raw(
        grid: &Arc<SpectralGrid>,
        kind: ScalarKind,
        repr: Representation,
        mut data: Vec<Complex64>,
    ) -> Result<Field> {
        if data.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                grid.len(),
                data.len()
            )));
        }
        if kind == ScalarKind::Real && repr == Representation::Physical {
            for v in &mut data {
                v.im = 0.0;
            }
        }
        Ok(Field {
            grid: grid.clone(),
            kind,
            repr,
            zero_mean: false,
            data,
        })
    }

    /// Sample a real function of `x` on a 1D grid (or of `x₁` on 2D rows).
    pub fn from_fn(grid: &Arc<SpectralGrid>, f: impl Fn(f64) -> f64) -> Field {
        let values = (0..grid.len())
            .map(|i| f(grid.x(0, grid.split(i).0)))
            .collect();
        Field::from_real(grid, values).expect("length matches grid")
    }

    pub fn from_fn_complex(grid: &Arc<SpectralGrid>, f: impl Fn(f64) -> Complex64) -> Field {
        let values = (0..grid.len())
            .map(|i| f(grid.x(0, grid.split(i).0)))
            .collect();
        Field::from_complex(grid, values).expect("length matches grid")
    }

    pub fn from_fn_2d(grid: &Arc<SpectralGrid>, f: impl Fn(f64, f64) -> f64) -> Field {
        let values = (0..grid.len())
            .map(|i| {
                let (a, b) = grid.split(i);
                f(grid.x(0, a), grid.x(1, b))
            })
            .collect();
        Field::from_real(grid, values).expect("length matches grid")
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn kind(&self) -> ScalarKind {
        self.kind
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn zero_mean_required(&self) -> bool {
        self.zero_mean
    }

    /// Raw storage in the current representation.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// Mark the field as living in the zero-mean space and project it there.
    pub fn with_zero_mean(mut self) -> Field {
        self.zero_mean = true;
        self.enforce_zero_mean();
        self
    }

    pub(crate) fn flag_zero_mean(mut self) -> Field {
        self.zero_mean = true;
        self
    }

    pub fn without_zero_mean(mut self) -> Field {
        self.zero_mean = false;
        self
    }

    fn enforce_zero_mean(&mut self) {
        match self.repr {
            Representation::Spectral => self.data[0] = ZERO,
            Representation::Physical => {
                let n = self.data.len() as f64;
                let mean: Complex64 = self.data.iter().sum::<Complex64>() / n;
                for v in &mut self.data {
                    *v -= mean;
                }
            }
        }
    }

    fn finish(&mut self) {
        if self.zero_mean {
            self.enforce_zero_mean();
        }
        if self.kind == ScalarKind::Real && self.repr == Representation::Physical {
            for v in &mut self.data {
                v.im = 0.0;
            }
        }
    }

    pub fn to_spectral(&self) -> Field {
        self.clone().into_spectral()
    }

    pub fn into_spectral(mut self) -> Field {
        if self.repr == Representation::Physical {
            self.grid.forward(&mut self.data);
            self.repr = Representation::Spectral;
            if self.kind == ScalarKind::Real {
                symmetrize(&self.grid, &mut self.data);
            }
            self.finish();
        }
        self
    }

    pub fn to_physical(&self) -> Field {
        self.clone().into_physical()
    }

    pub fn into_physical(mut self) -> Field {
        if self.repr == Representation::Spectral {
            self.grid.inverse(&mut self.data);
            self.repr = Representation::Physical;
            self.finish();
        }
        self
    }

    /// Convert to `repr`, consuming the field.
    pub fn into_repr(self, repr: Representation) -> Field {
        match repr {
            Representation::Physical => self.into_physical(),
            Representation::Spectral => self.into_spectral(),
        }
    }

    /// Spectral coefficients (copy if the field is physical).
    pub fn coeffs(&self) -> Vec<Complex64> {
        match self.repr {
            Representation::Spectral => self.data.clone(),
            Representation::Physical => self.to_spectral().data,
        }
    }

    /// Physical samples (copy if the field is spectral).
    pub fn samples(&self) -> Vec<Complex64> {
        match self.repr {
            Representation::Physical => self.data.clone(),
            Representation::Spectral => self.to_physical().data,
        }
    }

    pub fn real_samples(&self) -> Vec<f64> {
        self.samples().into_iter().map(|c| c.re).collect()
    }

    /// Mean value over the torus.
    pub fn mean(&self) -> Complex64 {
        match self.repr {
            Representation::Spectral => self.data[0],
            Representation::Physical => {
                self.data.iter().sum::<Complex64>() / self.data.len() as f64
            }
        }
    }

    pub fn project_zero_mean(&self) -> Field {
        let mut out = self.clone();
        out.enforce_zero_mean();
        out
    }

    /// Apply the 2/3-rule mask; output is spectral.
    pub fn dealias(&self) -> Field {
        let mut out = self.to_spectral();
        out.grid.apply_mask(&mut out.data);
        out.finish();
        out
    }

    /// `∂ₓ^order` along axis 0.
    pub fn ddx(&self, order: u32) -> Field {
        self.partial(0, order)
    }

    /// `∂^order` along `axis`, returned in the input representation.
    pub fn partial(&self, axis: usize, order: u32) -> Field {
        let repr = self.repr;
        let mut coeffs = self.coeffs();
        differentiate(&self.grid, &mut coeffs, axis, order);
        let mut out = Field {
            grid: self.grid.clone(),
            kind: self.kind,
            repr: Representation::Spectral,
            zero_mean: self.zero_mean,
            data: coeffs,
        };
        out.finish();
        out.into_repr(repr)
    }

    /// Laplacian (1D: second derivative).
    pub fn laplacian(&self) -> Field {
        self.map_symbol(|k2| Complex64::new(-k2, 0.0))
    }

    /// Inverse Laplacian on the zero-mean subspace; mode 0 is set to zero.
    pub fn inverse_laplacian(&self) -> Field {
        self.map_symbol(|k2| {
            if k2 == 0.0 {
                ZERO
            } else {
                Complex64::new(-1.0 / k2, 0.0)
            }
        })
    }

    /// Multiply every mode by `symbol(|k|²)`; keeps the input representation.
    pub fn map_symbol(&self, symbol: impl Fn(f64) -> Complex64) -> Field {
        let repr = self.repr;
        let mut coeffs = self.coeffs();
        for (f, c) in coeffs.iter_mut().enumerate() {
            *c *= symbol(self.grid.k_squared(f));
        }
        let mut out = Field {
            grid: self.grid.clone(),
            kind: self.kind,
            repr: Representation::Spectral,
            zero_mean: self.zero_mean,
            data: coeffs,
        };
        out.finish();
        out.into_repr(repr)
    }

    /// Circular translation `u(· + xi)` along axis 0, exact for the trigonometric interpolant.
    pub fn translate(&self, xi: f64) -> Field {
        let repr = self.repr;
        let mut coeffs = self.coeffs();
        for (f, c) in coeffs.iter_mut().enumerate() {
            if self.grid.is_nyquist(f, 0) {
                // keep real fields real: Nyquist term becomes cos(kξ)·û
                *c *= (self.grid.wavevector(f).0 * xi).cos();
            } else {
                *c *= Complex64::from_polar(1.0, self.grid.wavevector(f).0 * xi);
            }
        }
        let mut out = Field {
            grid: self.grid.clone(),
            kind: self.kind,
            repr: Representation::Spectral,
            zero_mean: self.zero_mean,
            data: coeffs,
        };
        out.finish();
        out.into_repr(repr)
    }

    pub fn conj(&self) -> Field {
        let mut out = self.to_spectral();
        if out.kind == ScalarKind::Complex {
            let mut s = out.samples();
            for v in &mut s {
                *v = v.conj();
            }
            out = Field::from_raw(&self.grid, self.kind, Representation::Physical, s)
                .expect("same grid")
                .into_repr(self.repr);
            out.zero_mean = self.zero_mean;
        }
        out.into_repr(self.repr)
    }

    /// Pointwise product with both factors and the result restricted by the 2/3 rule.
    /// Output is spectral.
    pub fn dealias_product(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let kind = if self.kind == ScalarKind::Complex || other.kind == ScalarKind::Complex {
            ScalarKind::Complex
        } else {
            ScalarKind::Real
        };
        let coeffs = dealiased_product(
            &self.grid,
            &self.coeffs(),
            &other.coeffs(),
            kind == ScalarKind::Real,
        );
        Field::from_spectral(&self.grid, kind, coeffs)
    }

    /// `(u, v) = ∫ u v̄ dx`.
    pub fn inner_product(&self, other: &Field) -> Result<Complex64> {
        self.check_grid(other)?;
        if self.repr == Representation::Physical && other.repr == Representation::Physical {
            let s: Complex64 = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b.conj())
                .sum();
            return Ok(s * self.grid.cell_volume());
        }
        let (a, b) = (self.coeffs(), other.coeffs());
        Ok(spectral_inner(&self.grid, &a, &b))
    }

    pub fn l2_norm(&self) -> f64 {
        match self.repr {
            Representation::Physical => {
                (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume())
                    .sqrt()
            }
            Representation::Spectral => spectral_l2_sq(&self.grid, &self.data).sqrt(),
        }
    }

    /// `|∇u|` (in 1D `|uₓ|`).
    pub fn semi_h1_norm(&self) -> f64 {
        let c = self.coeffs();
        spectral_semi_h1_sq(&self.grid, &c).sqrt()
    }

    /// `‖u‖ = (|uₓ|² + |u|²)^{1/2}`.
    pub fn h1_norm(&self) -> f64 {
        let c = self.coeffs();
        (spectral_semi_h1_sq(&self.grid, &c) + spectral_l2_sq(&self.grid, &c)).sqrt()
    }

    /// `∫ |u|⁴ dx` by the trapezoid rule on the physical samples.
    pub fn l4_norm_pow4(&self) -> f64 {
        let s = self.samples();
        s.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples().iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, a: f64) -> Field {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= a;
        }
        out
    }

    /// `self + a·other` in the representation of `self`.
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let o = other.clone().into_repr(self.repr);
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&o.data) {
            *v += a * w;
        }
        if other.kind == ScalarKind::Complex {
            out.kind = ScalarKind::Complex;
        }
        out.finish();
        Ok(out)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    /// Reinterpret a real field as complex.
    pub fn into_complex(mut self) -> Field {
        self.kind = ScalarKind::Complex;
        self
    }

    pub fn require_real(&self) -> Result<()> {
        if self.kind != ScalarKind::Real {
            return Err(Error::KindMismatch {
                expected: "real",
                found: self.kind.name(),
            });
        }
        Ok(())
    }

    pub fn require_zero_mean(&self, tol: f64) -> Result<()> {
        let mean = self.mean().norm();
        let scale = self.l2_norm() / self.grid.volume().sqrt();
        if mean > tol * scale.max(1.0) {
            return Err(Error::NonZeroMean { mean });
        }
        Ok(())
    }

    fn check_grid(&self, other: &Field) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Force exact conjugate symmetry `û_{-k} = conj(û_k)` and real Nyquist/zero modes.
pub fn symmetrize(grid: &SpectralGrid, coeffs: &mut [Complex64]) {
    let (n0, n1) = (grid.n(0), grid.n(1));
    for i0 in 0..n0 {
        for i1 in 0..n1 {
            let f = i0 * n1 + i1;
            let g = ((n0 - i0) % n0) * n1 + (n1 - i1) % n1;
            if g < f {
                continue;
            }
            if g == f {
                coeffs[f].im = 0.0;
            } else {
                let avg = 0.5 * (coeffs[f] + coeffs[g].conj());
                coeffs[f] = avg;
                coeffs[g] = avg.conj();
            }
        }
    }
}

/// Multiply coefficients by `(i k_axis)^order`; odd orders drop the Nyquist mode.
pub fn differentiate(grid: &SpectralGrid, coeffs: &mut [Complex64], axis: usize, order: u32) {
    for (f, c) in coeffs.iter_mut().enumerate() {
        if order % 2 == 1 && grid.is_nyquist(f, axis) {
            *c = ZERO;
            continue;
        }
        let (k0, k1) = grid.wavevector(f);
        let k = if axis == 0 { k0 } else { k1 };
        *c *= Complex64::new(0.0, k).powu(order);
    }
}

/// Dealiased pointwise product of two coefficient arrays.
pub fn dealiased_product(
    grid: &SpectralGrid,
    a: &[Complex64],
    b: &[Complex64],
    real: bool,
) -> Vec<Complex64> {
    let mut pa = a.to_vec();
    let mut pb = b.to_vec();
    grid.apply_mask(&mut pa);
    grid.apply_mask(&mut pb);
    grid.inverse(&mut pa);
    grid.inverse(&mut pb);
    if real {
        for (x, y) in pa.iter_mut().zip(&pb) {
            *x = Complex64::new(x.re * y.re, 0.0);
        }
    } else {
        for (x, y) in pa.iter_mut().zip(&pb) {
            *x *= y;
        }
    }
    grid.forward(&mut pa);
    grid.apply_mask(&mut pa);
    if real {
        symmetrize(grid, &mut pa);
    }
    pa
}

/// `L Σ û_k conj(v̂_k)` (Parseval).
pub fn spectral_inner(grid: &SpectralGrid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<Complex64>() * grid.volume()
}

pub fn spectral_l2_sq(grid: &SpectralGrid, a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>() * grid.volume()
}

pub fn spectral_semi_h1_sq(grid: &SpectralGrid, a: &[Complex64]) -> f64 {
    a.iter()
        .enumerate()
        .map(|(f, x)| grid.k_squared(f) * x.norm_sqr())
        .sum::<f64>()
        * grid.volume()
}
