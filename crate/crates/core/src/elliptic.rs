//! Jacobi elliptic functions, cnoidal waves of KdV, the associated
//! Schrödinger eigenpair and the single-parameter modulation laws.
//!
//! The complete elliptic integral exposed here is the full-period convention
//! `∫₀^{2π} (1 − m sin²θ)^{−1/2} dθ`, four times the usual quarter period `K(m)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::{Direction, PerturbedKdvKind};
use crate::numerics;
use crate::spectral::{Field, SpectralGrid};

fn agm_terms(m: f64) -> (f64, Vec<(f64, f64)>) {
    // (a_n, c_n) pairs of the descending AGM sequence
    let mut a = 1.0;
    let mut b = (1.0 - m).sqrt();
    let mut c = m.sqrt();
    let mut terms = vec![(a, c)];
    for _ in 0..64 {
        if c.abs() <= f64::EPSILON * a {
            break;
        }
        let an = 0.5 * (a + b);
        c = 0.5 * (a - b);
        b = (a * b).sqrt();
        a = an;
        terms.push((a, c));
    }
    (a, terms)
}

/// Quarter-period integral `K(m) = ∫₀^{π/2} (1 − m sin²θ)^{−1/2} dθ`.
pub(crate) fn ellip_k(m: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::InvalidParameter(format!("m = {m} must lie in [0, 1)")));
    }
    let (a, _) = agm_terms(m);
    Ok(PI / (2.0 * a))
}

/// Full-period integral `∫₀^{2π} (1 − m sin²θ)^{−1/2} dθ = 4K(m)`.
pub fn ellip_k_full(m: f64) -> Result<f64> {
    Ok(4.0 * ellip_k(m)?)
}

/// Complete integral of the second kind `E(m)`.
pub fn ellip_e(m: f64) -> Result<f64> {
    if m == 1.0 {
        return Ok(1.0);
    }
    let k = ellip_k(m)?;
    let (_, terms) = agm_terms(m);
    let mut sum = 0.0;
    let mut pow = 0.5;
    for (_, c) in terms {
        sum += pow * c * c;
        pow *= 2.0;
    }
    Ok(k * (1.0 - sum))
}

/// `(sn, cn, dn)(u | m)` by the descending Landen (AGM) scheme.
pub fn jacobi_sncndn(u: f64, m: f64) -> (f64, f64, f64) {
    if m == 0.0 {
        return (u.sin(), u.cos(), 1.0);
    }
    if m >= 1.0 {
        let s = 1.0 / u.cosh();
        return (u.tanh(), s, s);
    }
    let (_, terms) = agm_terms(m);
    let period = 4.0 * PI / (2.0 * terms.last().unwrap().0);
    let u = u - period * (u / period).round();
    let n = terms.len() - 1;
    let mut phi = 2f64.powi(n as i32) * terms[n].0 * u;
    let mut prev = phi;
    for i in (1..=n).rev() {
        let (a, c) = terms[i];
        prev = phi;
        phi = 0.5 * (phi + (c / a * phi.sin()).asin());
    }
    let sn = phi.sin();
    let cn = phi.cos();
    let dn = if n == 0 { 1.0 } else { cn / (prev - phi).cos() };
    (sn, cn, dn)
}

pub fn jacobi_cn(u: f64, m: f64) -> f64 {
    jacobi_sncndn(u, m).1
}

pub fn jacobi_sn(u: f64, m: f64) -> f64 {
    jacobi_sncndn(u, m).0
}

pub fn jacobi_dn(u: f64, m: f64) -> f64 {
    jacobi_sncndn(u, m).2
}

/// Parameters of the cnoidal solution `u = 12 m₀ l₀² cn²(l₀(x − c₀t), m₀)` of KdV.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CnoidalParams {
    pub m0: f64,
    pub length: f64,
    pub l0: f64,
    pub c0: f64,
    pub amplitude: f64,
    /// Spatial mean of the raw wave.
    pub mean: f64,
    /// Travel speed of the zero-mean field under `u_t + uuₓ + uₓₓₓ = 0`.
    pub shifted_speed: f64,
    pub k: f64,
    pub e: f64,
    /// `C_m = ∫ cn² over one period = 4(E − (1−m)K)/m`.
    pub c_m: f64,
}

impl CnoidalParams {
    pub fn new(m0: f64, length: f64) -> Result<CnoidalParams> {
        if !(m0 > 0.0 && m0 < 1.0) {
            return Err(Error::InvalidParameter(format!("m₀ = {m0} must lie in (0, 1)")));
        }
        let k = ellip_k(m0)?;
        let e = ellip_e(m0)?;
        let l0 = 4.0 * k / length;
        let c0 = 4.0 * (2.0 * m0 - 1.0) * l0 * l0;
        let mean = 12.0 * l0 * l0 * (e - (1.0 - m0) * k) / k;
        Ok(CnoidalParams {
            m0,
            length,
            l0,
            c0,
            amplitude: 12.0 * m0 * l0 * l0,
            mean,
            shifted_speed: c0 - mean,
            k,
            e,
            c_m: 4.0 * (e - (1.0 - m0) * k) / m0,
        })
    }

    /// Raw (positive-mean) wave at `(x, t)`.
    pub fn value(&self, x: f64, t: f64) -> f64 {
        let c = jacobi_cn(self.l0 * (x - self.c0 * t), self.m0);
        self.amplitude * c * c
    }

    /// Time for the zero-mean profile to travel one spatial period.
    pub fn traversal_time(&self) -> f64 {
        self.length / self.shifted_speed.abs()
    }

    /// Schrödinger eigenvalue `(2m₀ − 1)l₀²`.
    pub fn eigenvalue(&self) -> f64 {
        (2.0 * self.m0 - 1.0) * self.l0 * self.l0
    }

    /// Normalized eigenfunction `√(l₀/C_m) cn(l₀(x − c₀t))`.
    pub fn eigenfunction(&self, x: f64, t: f64) -> f64 {
        (self.l0 / self.c_m).sqrt() * jacobi_cn(self.l0 * (x - self.c0 * t), self.m0)
    }
}

fn check_resolution(p: &CnoidalParams, grid: &SpectralGrid) -> Result<()> {
    let per_width = 1.0 / (p.l0 * grid.spacing(0));
    if per_width < 16.0 {
        return Err(Error::Resolution(format!(
            "{per_width:.1} points per width 1/l₀, need 16"
        )));
    }
    Ok(())
}

/// Zero-mean cnoidal initial state.
pub fn make_cnoidal(m0: f64, grid: &Arc<SpectralGrid>) -> Result<(CnoidalParams, Field)> {
    let p = CnoidalParams::new(m0, grid.length(0))?;
    check_resolution(&p, grid)?;
    let u = Field::from_fn(grid, |x| p.value(x, 0.0)).with_zero_mean();
    Ok((p, u))
}

/// Raw cnoidal wave (positive mean retained).
pub fn raw_cnoidal(p: &CnoidalParams, grid: &Arc<SpectralGrid>) -> Field {
    Field::from_fn(grid, |x| p.value(x, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenCheck {
    /// `‖ψₓₓ + (u/6)ψ − λψ‖ / ‖ψ‖`.
    pub residual: f64,
    /// Eigenvalue of the dense collocation operator closest to `λ`.
    pub discrete_eigenvalue: f64,
    pub norm_sq: f64,
}

/// Spectral second-derivative collocation matrix.
pub fn collocation_d2(grid: &Arc<SpectralGrid>) -> DMatrix<f64> {
    let n = grid.n(0);
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = Field::from_real(grid, e).expect("grid-sized").ddx(2).real_samples();
        for i in 0..n {
            d[(i, j)] = col[i];
        }
    }
    // exact symmetry up to round-off
    let t = d.transpose();
    (d + t) * 0.5
}

/// Check that `ψ` solves `(∂ₓₓ + u/6)ψ = λψ` and cross-validate `λ` with the
/// dense collocation spectrum.
pub fn eigencheck(u: &Field, psi: &Field, lambda: f64) -> Result<EigenCheck> {
    let grid = u.grid();
    let n = grid.n(0);
    if n > 1024 {
        return Err(Error::InvalidParameter("dense eigencheck limited to N ≤ 1024".into()));
    }
    let us = u.real_samples();
    let ps = psi.real_samples();
    let pxx = psi.ddx(2).real_samples();
    let res: Vec<f64> = (0..n)
        .map(|i| pxx[i] + us[i] / 6.0 * ps[i] - lambda * ps[i])
        .collect();
    let r = Field::from_real(grid, res)?;
    let residual = r.l2_norm() / psi.l2_norm();

    let mut h = collocation_d2(grid);
    for i in 0..n {
        h[(i, i)] += us[i] / 6.0;
    }
    let eig = SymmetricEigen::new(h);
    let discrete = eig
        .eigenvalues
        .iter()
        .copied()
        .min_by(|a, b| (a - lambda).abs().total_cmp(&(b - lambda).abs()))
        .unwrap_or(f64::NAN);
    Ok(EigenCheck {
        residual,
        discrete_eigenvalue: discrete,
        norm_sq: psi.l2_norm().powi(2),
    })
}

/// `λ̃_t = (1/6) ε ∫ ψ̃² q dx` for a generic perturbation `q`.
pub fn eigenvalue_rate(psi: &Field, q: &Field, epsilon: f64) -> Result<f64> {
    let p2 = Field::from_real(psi.grid(), psi.real_samples().iter().map(|v| v * v).collect())?;
    Ok(epsilon / 6.0 * p2.inner_product(q)?.re)
}

/// Quadrature and closed-form values of the sech moments.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModulationConstants {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl ModulationConstants {
    pub const CLOSED_FORM: ModulationConstants = ModulationConstants {
        c: 2.0 / 3.0,
        c1: 8.0 / 15.0,
        c2: 8.0 / 15.0,
        c3: 0.0,
        c4: 1.0 / 5.0,
    };

    pub fn as_array(&self) -> [f64; 5] {
        [self.c, self.c1, self.c2, self.c3, self.c4]
    }
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// Sech-moment constants by adaptive quadrature on `[−40, 40]`.
pub fn modulation_constants() -> ModulationConstants {
    let q = |f: &dyn Fn(f64) -> f64| numerics::integrate(f, -40.0, 40.0, 1e-15);
    let s2 = q(&|x| sech(x).powi(2));
    let s4 = q(&|x| sech(x).powi(4));
    let bracket = q(&|x| sech(x).powi(4) * (3.0 * sech(x).powi(2) - 2.0));
    let odd = |x: f64| sech(x).powi(4) * x.tanh() * (3.0 * sech(x).powi(2) - 1.0);
    ModulationConstants {
        c: s4 / s2,
        c1: 2.0 * bracket / s2,
        c2: bracket,
        c3: q(&odd),
        c4: q(&|x| odd(x) * x),
    }
}

/// The damped and viscous constants evaluated with `cn(·, m)` instead of
/// `sech`, over one period; they tend to `C̃` and `C̃₁` as `m → 1`.
pub fn cn_modulation_constants(m: f64) -> Result<(f64, f64)> {
    let k = ellip_k(m)?;
    let e = ellip_e(m)?;
    let c_m = 4.0 * (e - (1.0 - m) * k) / m;
    let q = |f: &dyn Fn(f64) -> f64| numerics::integrate(f, -2.0 * k, 2.0 * k, 1e-11);
    let cn4 = q(&|x| jacobi_cn(x, m).powi(4));
    let vis = q(&|x| {
        let c2 = jacobi_cn(x, m).powi(2);
        c2 * (3.0 * m * c2 * c2 + (2.0 - 4.0 * m) * c2 + m - 1.0)
    });
    let d = (2.0 * m - 1.0) * c_m;
    Ok((m * cn4 / d, 2.0 * m * vis / d))
}

/// Reduced evolution `l(t)` of the cnoidal parameter under `εq`, with `m` frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub kind: PerturbedKdvKind,
    pub epsilon: f64,
    pub m: f64,
    pub l0: f64,
}

impl Modulation {
    pub fn new(kind: PerturbedKdvKind, epsilon: f64, m: f64, l0: f64) -> Result<Modulation> {
        if !(epsilon > 0.0 && l0 > 0.0) {
            return Err(Error::InvalidParameter("ε and l₀ must be positive".into()));
        }
        Ok(Modulation { kind, epsilon, m, l0 })
    }

    /// `dl/dt` in forward time.
    pub fn rhs(&self, l: f64) -> f64 {
        modulation_rhs(self.kind, l, self.epsilon)
    }

    /// Closed-form `l(t)`; negative `t` runs backward. `None` past the
    /// backward singularity.
    pub fn l_at(&self, t: f64) -> Option<f64> {
        let (eps, l0) = (self.epsilon, self.l0);
        let k = ModulationConstants::CLOSED_FORM;
        match self.kind {
            PerturbedKdvKind::Damped => Some(l0 * (-eps * k.c * t).exp()),
            PerturbedKdvKind::Viscous => {
                let d = 1.0 + 2.0 * eps * k.c1 * l0 * l0 * t;
                (d > 0.0).then(|| l0 / d.sqrt())
            }
            PerturbedKdvKind::ViscousBbm => Some(bbm_l(l0, eps, t)),
        }
    }

    pub fn l_in(&self, direction: Direction, s: f64) -> Option<f64> {
        self.l_at(direction.sign() * s)
    }

    /// Backward time at which `l → ∞` (viscous kind only).
    pub fn backward_singularity(&self) -> Option<f64> {
        match self.kind {
            PerturbedKdvKind::Viscous => Some(
                1.0 / (2.0 * self.epsilon * ModulationConstants::CLOSED_FORM.c1 * self.l0 * self.l0),
            ),
            _ => None,
        }
    }

    pub fn amplitude(&self, l: f64) -> f64 {
        12.0 * self.m * l * l
    }

    pub fn speed(&self, l: f64) -> f64 {
        4.0 * (2.0 * self.m - 1.0) * l * l
    }
}

/// Right side of the modulation ODE for each perturbation kind.
pub fn modulation_rhs(kind: PerturbedKdvKind, l: f64, epsilon: f64) -> f64 {
    let k = ModulationConstants::CLOSED_FORM;
    match kind {
        PerturbedKdvKind::Damped => -epsilon * k.c * l,
        PerturbedKdvKind::Viscous => -epsilon * k.c1 * l.powi(3),
        PerturbedKdvKind::ViscousBbm => {
            // −2l_t = 2εC̃₂l³ + l_t·8ε(C̃₂ − C̃₄)l² with C̃₃ = 0
            -2.0 * epsilon * k.c2 * l.powi(3) / (2.0 + 8.0 * epsilon * (k.c2 - k.c4) * l * l)
        }
    }
}

/// Invariant `(5/2) ln l − 15/(16εl²) + t` of the BBM law.
fn bbm_invariant(l: f64, eps: f64) -> f64 {
    2.5 * l.ln() - 15.0 / (16.0 * eps * l * l)
}

fn bbm_l(l0: f64, eps: f64, t: f64) -> f64 {
    let target = bbm_invariant(l0, eps) - t;
    // g(l) is increasing in l; Newton in ln l from l₀
    let mut y = l0.ln();
    for _ in 0..100 {
        let l = y.exp();
        let g = bbm_invariant(l, eps) - target;
        let dg = 2.5 + 30.0 / (16.0 * eps * l * l);
        let step = g / dg;
        y -= step;
        if step.abs() < 1e-15 * y.abs().max(1.0) {
            break;
        }
    }
    y.exp()
}

/// Amplitude-derived `l` of a zero-mean cnoidal-like profile:
/// the raw wave spans `[0, 12ml²]`, so `l = √((max − min)/(12m))`.
pub fn l_from_amplitude(u: &Field, m: f64) -> f64 {
    let s = u.real_samples();
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    ((hi - lo) / (12.0 * m)).sqrt()
}

/// Upsampled `(min, max)` of a real field (spectral interpolation by `factor`).
pub fn interpolated_extrema(u: &Field, factor: usize) -> (f64, f64) {
    let grid = u.grid();
    let n = grid.n(0);
    let c = u.coeffs();
    let big = n * factor;
    let mut d = vec![Complex64::new(0.0, 0.0); big];
    for (i, v) in c.iter().enumerate() {
        let j = crate::spectral::mode_index(i, n);
        if j.unsigned_abs() as usize * 2 == n {
            continue;
        }
        d[crate::spectral::storage_index(j, big)] = *v;
    }
    let fine = SpectralGrid::new_1d(big, grid.length(0)).expect("power of two");
    fine.inverse(&mut d);
    let hi = d.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let lo = d.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Kbs, SpectralModel};

    #[test]
    fn k_full_values() {
        assert!((ellip_k_full(0.0).unwrap() - 2.0 * PI).abs() < 1e-15);
        // 4K(0.5) from mpmath
        let v = ellip_k_full(0.5).unwrap();
        assert!((v - 7.416_298_709_205_487_7).abs() < 1e-14 * v);
        let q = numerics::integrate(
            |t: f64| 1.0 / (1.0 - 0.5 * t.sin().powi(2)).sqrt(),
            0.0,
            2.0 * PI,
            1e-15,
        );
        assert!((v - q).abs() < 1e-13);
        let near = ellip_k_full(1.0 - 1e-10).unwrap();
        assert!(near > 40.0);
        assert!((near - 51.596_879_305_550_4).abs() < 1e-6);
        assert!(ellip_k_full(1.0).is_err());
    }

    #[test]
    fn e_values() {
        assert!((ellip_e(0.0).unwrap() - PI / 2.0).abs() < 1e-15);
        // E(0.5) from mpmath
        assert!((ellip_e(0.5).unwrap() - 1.350_643_881_047_675_5).abs() < 1e-14);
    }

    #[test]
    fn cn_degenerate_cases() {
        for i in 0..200 {
            let x = -10.0 + 0.1 * i as f64;
            assert!((jacobi_cn(x, 0.0) - x.cos()).abs() < 1e-13);
            assert!((jacobi_cn(x, 1.0) - 1.0 / x.cosh()).abs() < 1e-12);
        }
        for m in [0.0, 0.3, 0.9, 0.999, 1.0] {
            assert_eq!(jacobi_cn(0.0, m), 1.0);
        }
    }

    #[test]
    fn cn_reference_values() {
        // mpmath ellipfun at 30 digits:('cn', 1.3, 0.7) and ellipfun('dn', 1.3, 0.7)
        let (_, cn, dn) = jacobi_sncndn(1.3, 0.7);
        assert!((cn - 0.438_500_230_973_472_9).abs() < 1e-12, "{cn}");
        assert!((dn - 0.659_240_257_261_836_5).abs() < 1e-12, "{dn}");
    }

    #[test]
    fn pythagorean_identity_and_period() {
        for m in [0.1, 0.5, 0.9, 0.99] {
            let p = ellip_k_full(m).unwrap();
            for i in 0..1000 {
                let x = -20.0 + 0.04 * i as f64;
                let (s, c, d) = jacobi_sncndn(x, m);
                assert!((s * s + c * c - 1.0).abs() < 1e-12);
                assert!((d * d + m * s * s - 1.0).abs() < 1e-12);
                assert!((jacobi_cn(x + p, m) - c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cn_square_matches_finite_differences() {
        let p = CnoidalParams::new(0.9, 2.0 * PI).unwrap();
        let g = Arc::new(SpectralGrid::new_1d(256, 2.0 * PI).unwrap());
        let u = raw_cnoidal(&p, &g);
        let uxx = u.ddx(2).real_samples();
        let h = 2.0 * PI / 16384.0;
        let fd = |x: f64, h: f64| (p.value(x + h, 0.0) - 2.0 * p.value(x, 0.0) + p.value(x - h, 0.0)) / (h * h);
        let scale = uxx.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for i in (0..256).step_by(7) {
            let x = g.x(0, i);
            // Richardson on centered differences
            let r = (4.0 * fd(x, h) - fd(x, 2.0 * h)) / 3.0;
            assert!((uxx[i] - r).abs() < 1e-8 * scale, "at {x}");
        }
    }

    #[test]
    fn cnoidal_parameters() {
        let p = CnoidalParams::new(0.5, 2.0 * PI).unwrap();
        assert_eq!(p.c0, 0.0);
        let p = CnoidalParams::new(0.9, 2.0 * PI).unwrap();
        assert!((p.l0 - ellip_k_full(0.9).unwrap() / (2.0 * PI)).abs() < 1e-15);
        assert!((p.amplitude - 12.0 * 0.9 * p.l0 * p.l0).abs() < 1e-12);
        // period constraint and periodicity
        assert!((p.value(0.0, 0.0) - p.value(2.0 * PI, 0.0)).abs() < 1e-10);
        let g = Arc::new(SpectralGrid::new_1d(512, 2.0 * PI).unwrap());
        let raw = raw_cnoidal(&p, &g);
        assert!((raw.mean().re - p.mean).abs() < 1e-10 * p.mean);
        let coarse = Arc::new(SpectralGrid::new_1d(16, 2.0 * PI).unwrap());
        assert!(matches!(make_cnoidal(0.9, &coarse), Err(Error::Resolution(_))));
    }

    #[test]
    fn kdv_residual_of_cnoidal_wave() {
        let g = Arc::new(SpectralGrid::new_1d(512, 2.0 * PI).unwrap());
        let (p, u) = make_cnoidal(0.9, &g).unwrap();
        let m = Kbs::new(&g, 0.0, 0.0, 1.0).unwrap();
        // zero-mean field travels at c₀ − ū
        let t = m.tendency(&u).unwrap();
        let expect = u.ddx(1).scale(-p.shifted_speed);
        let r = t.sub(&expect).unwrap().l2_norm() / u.l2_norm();
        assert!(r < 1e-8, "residual {r}");
        // raw wave: u_t = −c₀uₓ with the full tendency −uuₓ − uₓₓₓ
        let raw = raw_cnoidal(&p, &g);
        let full = raw
            .ddx(3)
            .add(&Field::from_real(
                &g,
                raw.real_samples()
                    .iter()
                    .zip(raw.ddx(1).real_samples())
                    .map(|(a, b)| a * b)
                    .collect(),
            )
            .unwrap())
            .unwrap()
            .scale(-1.0);
        let r = full.sub(&raw.ddx(1).scale(-p.c0)).unwrap().l2_norm() / raw.l2_norm();
        assert!(r < 1e-8, "raw residual {r}");
    }

    #[test]
    fn eigenpair() {
        for (m0, n) in [(0.5, 256), (0.9, 256), (0.99, 256)] {
            let g = Arc::new(SpectralGrid::new_1d(n, 2.0 * PI).unwrap());
            let p = CnoidalParams::new(m0, 2.0 * PI).unwrap();
            let u = raw_cnoidal(&p, &g);
            let psi = Field::from_fn(&g, |x| p.eigenfunction(x, 0.0));
            let chk = eigencheck(&u, &psi, p.eigenvalue()).unwrap();
            assert!(chk.residual < 1e-8, "m = {m0}: {chk:?}");
            assert!((chk.discrete_eigenvalue - p.eigenvalue()).abs() < 1e-8, "m = {m0}: {chk:?}");
            assert!((chk.norm_sq - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_potential_has_fourier_eigenvalues() {
        let g = Arc::new(SpectralGrid::new_1d(32, 2.0 * PI).unwrap());
        let zero = Field::from_fn(&g, |_| 0.0);
        let psi = Field::from_fn(&g, |x| (3.0 * x).cos());
        let chk = eigencheck(&zero, &psi, -9.0).unwrap();
        assert!(chk.residual < 1e-13);
        assert!((chk.discrete_eigenvalue + 9.0).abs() < 1e-11);
    }

    #[test]
    fn constants_match_closed_forms() {
        let q = modulation_constants().as_array();
        let c = ModulationConstants::CLOSED_FORM.as_array();
        for (a, b) in q.iter().zip(c) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn cn_constants_approach_sech_limit() {
        let (c, c1) = cn_modulation_constants(1.0 - 1e-9).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-3);
        assert!((c1 - 8.0 / 15.0).abs() < 1e-3);
    }

    #[test]
    fn modulation_laws() {
        let d = Modulation::new(PerturbedKdvKind::Damped, 0.01, 0.99, 1.0).unwrap();
        for t in [0.0, 10.0, 50.0] {
            assert!((d.l_at(t).unwrap() - (-(2.0 / 3.0) * 0.01 * t).exp()).abs() < 1e-15);
        }
        let v = Modulation::new(PerturbedKdvKind::Viscous, 0.01, 0.99, 1.0).unwrap();
        assert!((v.backward_singularity().unwrap() - 93.75).abs() < 1e-12);
        assert!(v.l_in(Direction::Backward, 94.0).is_none());
        // RK4 oracle for the viscous closed form
        let tr = numerics::rk4(|_, l| v.rhs(l), 1.0, 0.0, 30.0, 3000);
        assert!((tr.last().unwrap().1 - v.l_at(30.0).unwrap()).abs() < 1e-12);
        let back = numerics::rk4(|_, l| -v.rhs(l), 1.0, 0.0, 90.0, 90000);
        assert!((back.last().unwrap().1 - v.l_in(Direction::Backward, 90.0).unwrap()).abs() < 1e-6);

        let b = Modulation::new(PerturbedKdvKind::ViscousBbm, 0.01, 0.99, 2.0).unwrap();
        let tr = numerics::rk4(|_, l| b.rhs(l), 2.0, 0.0, 40.0, 4000);
        assert!((tr.last().unwrap().1 - b.l_at(40.0).unwrap()).abs() < 1e-11);
        let closed = |l: f64| -8.0 * 0.01 * l.powi(3) / (20.0 * 0.01 * l * l + 15.0);
        for l in [0.1, 1.0, 10.0] {
            assert!((b.rhs(l) - closed(l)).abs() < 1e-15 * closed(l).abs().max(1.0));
        }
        let big = 1e6;
        assert!((modulation_rhs(PerturbedKdvKind::ViscousBbm, big, 0.01) / big + 0.4).abs() < 1e-6);
    }

    #[test]
    fn eigenvalue_rate_of_damping() {
        // q = −u gives λ̃_t = −(ε/6)∫ψ²u
        let g = Arc::new(SpectralGrid::new_1d(256, 2.0 * PI).unwrap());
        let p = CnoidalParams::new(0.9, 2.0 * PI).unwrap();
        let u = raw_cnoidal(&p, &g);
        let psi = Field::from_fn(&g, |x| p.eigenfunction(x, 0.0));
        let r = eigenvalue_rate(&psi, &u.scale(-1.0), 0.01).unwrap();
        let direct: f64 = psi
            .real_samples()
            .iter()
            .zip(u.real_samples())
            .map(|(a, b)| a * a * b)
            .sum::<f64>()
            * g.spacing(0);
        assert!((r + 0.01 / 6.0 * direct).abs() < 1e-12);
    }

    #[test]
    fn amplitude_recovers_l() {
        let g = Arc::new(SpectralGrid::new_1d(512, 2.0 * PI).unwrap());
        let (p, u) = make_cnoidal(0.99, &g).unwrap();
        let (lo, hi) = interpolated_extrema(&u, 4);
        let l = ((hi - lo) / (12.0 * 0.99)).sqrt();
        assert!((l - p.l0).abs() < 1e-6 * p.l0);
        assert!((l_from_amplitude(&u, 0.99) - p.l0).abs() < 1e-3 * p.l0);
        assert!(u.zero_mean_required());
    }
}
