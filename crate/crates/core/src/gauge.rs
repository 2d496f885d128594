//! Bump function, gauge function and the shift-minimized Lyapunov functional
//! `F(u) = inf_ξ ∫ (u − φ(· + ξ))²` used to bound backward growth of KBS.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::integrator::Probe;
use crate::numerics;
use crate::spectral::{Field, SpectralGrid};

/// Integral of `exp(−1/(1 − x²))` over `(−1, 1)`.
const MOLLIFIER_MASS: f64 = 0.443_993_816_168_079_4;

fn mollifier(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn wrap_centered(x: f64, length: f64) -> f64 {
    x - length * (x / length).round()
}

/// Measured constants in `sup b ≤ cL/ε`, `|b| ≤ cL/ε^{1/2}`, `|b′| ≤ cL/ε^{3/2}`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BumpConstants {
    pub sup: f64,
    pub l2: f64,
    pub derivative_l2: f64,
}

/// Smooth periodic bump `b_ε ≥ 0` supported in `(−ε, ε)` with `∫ b_ε = L`.
#[derive(Debug, Clone)]
pub struct BumpFunction {
    pub epsilon: f64,
    grid: Arc<SpectralGrid>,
    samples: Vec<f64>,
    derivative: Vec<f64>,
    pub integral: f64,
    pub constants: BumpConstants,
}

impl BumpFunction {
    /// Hat `L(a − |x|)/a²` of half-width `a = 3ε/4` mollified with a kernel of
    /// radius `ε/4`, then rescaled so the grid integral is exactly `L`.
    pub fn new(epsilon: f64, grid: &Arc<SpectralGrid>) -> Result<BumpFunction> {
        if grid.dim() != 1 {
            return Err(Error::InvalidGrid("bump requires a 1D grid".into()));
        }
        let length = grid.length(0);
        let h = grid.spacing(0);
        if !(epsilon > 8.0 * h && epsilon < 0.5 * length) {
            return Err(Error::Resolution(format!(
                "ε = {epsilon} must lie in (8h, L/2) = ({}, {})",
                8.0 * h,
                0.5 * length
            )));
        }
        let a = 0.75 * epsilon;
        let r = 0.25 * epsilon;
        let norm = 1.0 / (r * MOLLIFIER_MASS);
        let hat = |z: f64| if z.abs() < a { length * (a - z.abs()) / (a * a) } else { 0.0 };
        let hat_slope = |z: f64| {
            if z.abs() < a && z != 0.0 {
                -length * z.signum() / (a * a)
            } else {
                0.0
            }
        };
        let convolve = |x: f64, f: &dyn Fn(f64) -> f64| -> f64 {
            let mut cuts = vec![-r, r];
            for c in [x - a, x, x + a] {
                if c > -r && c < r {
                    cuts.push(c);
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.windows(2)
                .map(|w| {
                    numerics::integrate(|y| f(x - y) * mollifier(y / r) * norm, w[0], w[1], 1e-14 * length / a)
                })
                .sum()
        };
        let n = grid.n(0);
        let mut samples = vec![0.0; n];
        let mut derivative = vec![0.0; n];
        for i in 0..n {
            let x = wrap_centered(grid.x(0, i), length);
            if x.abs() >= epsilon {
                continue;
            }
            samples[i] = convolve(x, &hat).max(0.0);
            derivative[i] = convolve(x, &hat_slope);
        }
        let sum: f64 = samples.iter().sum::<f64>() * h;
        let scale = length / sum;
        samples.iter_mut().for_each(|v| *v *= scale);
        derivative.iter_mut().for_each(|v| *v *= scale);
        let integral = samples.iter().sum::<f64>() * h;
        let sup = samples.iter().copied().fold(0.0, f64::max);
        let l2 = (samples.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        let dl2 = (derivative.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        Ok(BumpFunction {
            epsilon,
            grid: Arc::clone(grid),
            samples,
            derivative,
            integral,
            constants: BumpConstants {
                sup: sup * epsilon / length,
                l2: l2 * epsilon.sqrt() / length,
                derivative_l2: dl2 * epsilon.powf(1.5) / length,
            },
        })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn derivative(&self) -> &[f64] {
        &self.derivative
    }

    pub fn field(&self) -> Field {
        Field::from_real(&self.grid, self.samples.clone()).expect("grid-sized")
    }

    pub fn l2_norm(&self) -> f64 {
        (self.samples.iter().map(|v| v * v).sum::<f64>() * self.grid.spacing(0)).sqrt()
    }
}

/// Measured constants in the three gauge bounds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaugeConstants {
    /// `|φ| / (αL^{3/2})`
    pub phi: f64,
    /// `|φ′| / (α(L^{1/2} + L/ε^{1/2}))`
    pub phi_x: f64,
    /// `|φ″| / (αL/ε^{3/2})`
    pub phi_xx: f64,
}

/// `φ_{α,ε}(x) = αx − α∫₀ˣ b_ε`, a periodic function.
#[derive(Debug, Clone)]
pub struct GaugeFunction {
    pub alpha: f64,
    pub epsilon: f64,
    phi: Field,
    phi_coeffs: Vec<Complex64>,
    bump_coeffs: Vec<Complex64>,
    pub norm: f64,
    pub norm_x: f64,
    pub norm_xx: f64,
    pub endpoint_mismatch: f64,
    pub constants: GaugeConstants,
}

impl GaugeFunction {
    pub fn new(alpha: f64, bump: &BumpFunction) -> Result<GaugeFunction> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("α = {alpha} must be positive")));
        }
        let grid = bump.grid();
        let length = grid.length(0);
        let h = grid.spacing(0);
        let b = bump.field();
        let bump_coeffs = b.coeffs();
        let slope: Vec<f64> = bump.samples().iter().map(|v| alpha * (1.0 - v)).collect();
        let g = Field::from_real(grid, slope.clone())?.coeffs();
        let n = grid.n(0);
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        for f in 1..n {
            if grid.is_nyquist(f, 0) {
                continue;
            }
            let k = grid.wavevector(f).0;
            c[f] = g[f] / Complex64::new(0.0, k);
        }
        let at_zero: Complex64 = c.iter().sum();
        c[0] = -at_zero;
        let phi = Field::from_spectral(grid, crate::ScalarKind::Real, c.clone())?.into_physical();
        let norm = phi.l2_norm();
        let norm_x = (slope.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        let norm_xx = alpha * (bump.derivative().iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        let eps = bump.epsilon;
        Ok(GaugeFunction {
            alpha,
            epsilon: eps,
            phi,
            phi_coeffs: c,
            bump_coeffs,
            norm,
            norm_x,
            norm_xx,
            endpoint_mismatch: (g[0].re * length).abs(),
            constants: GaugeConstants {
                phi: norm / (alpha * length.powf(1.5)),
                phi_x: norm_x / (alpha * (length.sqrt() + length / eps.sqrt())),
                phi_xx: norm_xx / (alpha * length / eps.powf(1.5)),
            },
        })
    }

    pub fn field(&self) -> &Field {
        &self.phi
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        self.phi.grid()
    }
}

/// Minimizer of the shifted distance to the gauge.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LyapunovValue {
    pub f: f64,
    pub xi_star: f64,
    /// `∫ u(x)(1 − b(x + ξ*)) dx`, zero at an interior minimizer.
    pub first_order: f64,
}

fn trig_sum(grid: &SpectralGrid, c: &[Complex64], xi: f64, order: u32) -> f64 {
    // Re Σ (ik)^order c_k e^{ikξ}
    let mut s = 0.0;
    for (f, v) in c.iter().enumerate() {
        let k = grid.wavevector(f).0;
        let w = Complex64::from_polar(1.0, k * xi) * *v;
        let term = match order {
            0 => w.re,
            1 => -k * w.im,
            _ => -k * k * w.re,
        };
        s += term;
    }
    s
}

/// `F(u) = inf_ξ ∫ (u − φ(·+ξ))² dx` by an FFT scan over grid shifts,
/// golden-section refinement in the best cell and a Newton polish.
pub fn lyapunov_f(u: &Field, gauge: &GaugeFunction) -> Result<LyapunovValue> {
    u.require_real()?;
    let grid = gauge.grid();
    if u.grid().as_ref() != grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    let length = grid.length(0);
    let h = grid.spacing(0);
    let uh = u.coeffs();
    let corr: Vec<Complex64> = uh
        .iter()
        .zip(&gauge.phi_coeffs)
        .map(|(a, b)| a.conj() * b)
        .collect();
    let mut scan = corr.clone();
    grid.inverse(&mut scan);
    let best = (0..scan.len())
        .max_by(|&a, &b| scan[a].re.total_cmp(&scan[b].re))
        .unwrap_or(0);
    let center = best as f64 * h;
    let (mut xi, _) = numerics::golden_section(
        |x| -trig_sum(grid, &corr, x, 0),
        center - h,
        center + h,
        1e-10 * length,
    );
    for _ in 0..3 {
        let d1 = trig_sum(grid, &corr, xi, 1);
        let d2 = trig_sum(grid, &corr, xi, 2);
        if d2 >= 0.0 {
            break;
        }
        let step = d1 / d2;
        if step.abs() > h || !step.is_finite() {
            break;
        }
        let cand = xi - step;
        if trig_sum(grid, &corr, cand, 0) < trig_sum(grid, &corr, xi, 0) {
            break;
        }
        xi = cand;
    }
    let c = length * trig_sum(grid, &corr, xi, 0);
    let u2 = u.l2_norm().powi(2);
    let f = (u2 + gauge.norm * gauge.norm - 2.0 * c).max(0.0);
    let ub: Vec<Complex64> = uh
        .iter()
        .zip(&gauge.bump_coeffs)
        .map(|(a, b)| a.conj() * b)
        .collect();
    let first_order = length * (uh[0].re - trig_sum(grid, &ub, xi, 0));
    Ok(LyapunovValue {
        f,
        xi_star: xi.rem_euclid(length),
        first_order,
    })
}

/// `∫ u(x) b(x + ξ) dx`.
pub fn bump_overlap(u: &Field, bump: &BumpFunction, xi: f64) -> f64 {
    let grid = bump.grid();
    let uh = u.coeffs();
    let bh = bump.field().coeffs();
    let c: Vec<Complex64> = uh.iter().zip(&bh).map(|(a, b)| a.conj() * b).collect();
    grid.length(0) * trig_sum(grid, &c, xi, 0)
}

/// `C₀(α) = να²L + α³L³ + βα²L³ + (γ²/ν⁴)α⁵L⁵` with unit constants.
pub fn c0_alpha(nu: f64, beta: f64, gamma: f64, alpha: f64, length: f64) -> f64 {
    nu * alpha.powi(2) * length
        + alpha.powi(3) * length.powi(3)
        + beta * alpha.powi(2) * length.powi(3)
        + gamma * gamma / nu.powi(4) * alpha.powi(5) * length.powi(5)
}

/// Gauge width coupled to the dissipation: `ε = ν/(2αc₀L)`.
pub fn gauge_epsilon(nu: f64, alpha: f64, c0: f64, length: f64) -> f64 {
    nu / (2.0 * alpha * c0 * length)
}

/// Remove the component of `u` along `b − 1` so that `∫ b u = 0`, keeping the mean.
pub fn project_bump_orthogonal(u: &Field, bump: &BumpFunction) -> Result<Field> {
    let b = bump.field();
    let w = b.sub(&Field::from_fn(bump.grid(), |_| 1.0))?;
    let s = b.inner_product(u)?.re / b.inner_product(&w)?.re;
    u.sub(&w.scale(s))
}

/// `∫ b u² / (εL|uₓ|²)` for `u` with `∫ b u = 0`.
pub fn check_poincare(bump: &BumpFunction, u: &Field) -> Result<f64> {
    u.require_real()?;
    let b = bump.field();
    let overlap = b.inner_product(u)?.re;
    if overlap.abs() > 1e-8 * bump.l2_norm() * u.l2_norm() {
        return Err(Error::InvalidParameter(format!("∫ b u = {overlap:e} is not zero")));
    }
    let ux = u.ddx(1).l2_norm();
    if ux == 0.0 {
        return Err(Error::InvalidParameter("|uₓ| = 0".into()));
    }
    let h = bump.grid().spacing(0);
    let num: f64 = bump
        .samples()
        .iter()
        .zip(u.real_samples())
        .map(|(b, v)| b * v * v)
        .sum::<f64>()
        * h;
    Ok(num / (bump.epsilon * bump.grid().length(0) * ux * ux))
}

/// Test set for the Poincaré constant: random trigonometric polynomials of
/// degree ≤ 4 in a circle coordinate stretched to resolve scale `ε` near 0.
pub fn poincare_test_set(bump: &BumpFunction, count: usize, seed: u64) -> Vec<Field> {
    let grid = bump.grid();
    let length = grid.length(0);
    let kappa = length / (2.0 * PI * bump.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a: Vec<(f64, f64)> = (1..=4)
                .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            Field::from_fn(grid, |x| {
                let y = PI * wrap_centered(x, length) / length;
                let theta = 2.0 * (kappa * y.sin()).atan2(y.cos());
                a.iter()
                    .enumerate()
                    .map(|(j, (c, s))| {
                        let k = (j + 1) as f64;
                        (c * (k * theta).cos() + s * (k * theta).sin()) / k
                    })
                    .sum()
            })
        })
        .collect()
}

/// Largest Poincaré ratio over the seeded test set.
pub fn empirical_c0(bump: &BumpFunction, count: usize, seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for u in poincare_test_set(bump, count, seed) {
        let v = project_bump_orthogonal(&u, bump)?;
        worst = worst.max(check_poincare(bump, &v)?);
    }
    Ok(worst)
}

/// KBS parameters entering the right side of the Lyapunov inequality.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InequalityParams {
    pub nu: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub length: f64,
    /// `|A^{−1/2} f|²`
    pub forcing_sq: f64,
}

impl InequalityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::InvalidParameter("ν must be positive".into()));
        }
        if self.alpha < 8.0 * self.beta {
            return Err(Error::InvalidParameter(format!(
                "α = {} must be at least 8β = {}",
                self.alpha,
                8.0 * self.beta
            )));
        }
        Ok(())
    }

    pub fn c0_alpha(&self) -> f64 {
        c0_alpha(self.nu, self.beta, self.gamma, self.alpha, self.length)
    }

    /// `−(α/2)|u|² + (4/ν)|A^{−1/2}f|² + C₀(α)`
    pub fn rhs(&self, l2: f64) -> f64 {
        -0.5 * self.alpha * l2 * l2 + 4.0 / self.nu * self.forcing_sq + self.c0_alpha()
    }
}

/// `|A^{−1/2} f|² = Σ L|f̂_k|²/|k|²` over nonzero modes.
pub fn inverse_sqrt_laplacian_sq(f: &Field) -> f64 {
    let grid = f.grid();
    let c = f.coeffs();
    let vol = grid.volume();
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, z)| {
            let k2 = grid.k_squared(i);
            if k2 > 0.0 { vol * z.norm_sqr() / k2 } else { 0.0 }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub f: f64,
    pub xi_star: f64,
    pub c0_alpha: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct InequalityReport {
    pub samples: Vec<LyapunovSample>,
    /// Forward difference quotient of `F` on each interval.
    pub derivative: Vec<f64>,
    pub rhs: Vec<f64>,
    pub satisfied_fraction: f64,
}

/// Compare forward differences of `F` with the right side evaluated at the
/// left end of each interval.
pub fn inequality_from_series(
    t: &[f64],
    f: &[f64],
    xi: &[f64],
    l2: &[f64],
    params: &InequalityParams,
) -> Result<InequalityReport> {
    params.validate()?;
    let n = t.len();
    if f.len() != n || l2.len() != n || xi.len() != n {
        return Err(Error::InvalidParameter("series lengths differ".into()));
    }
    let c0 = params.c0_alpha();
    let samples = (0..n)
        .map(|i| LyapunovSample { t: t[i], f: f[i], xi_star: xi[i], c0_alpha: c0 })
        .collect();
    let mut derivative = Vec::with_capacity(n.saturating_sub(1));
    let mut rhs = Vec::with_capacity(n.saturating_sub(1));
    let mut ok = 0usize;
    for i in 0..n.saturating_sub(1) {
        let d = (f[i + 1] - f[i]) / (t[i + 1] - t[i]);
        let r = params.rhs(l2[i]);
        if d <= r {
            ok += 1;
        }
        derivative.push(d);
        rhs.push(r);
    }
    let satisfied_fraction = if derivative.is_empty() { 1.0 } else { ok as f64 / derivative.len() as f64 };
    Ok(InequalityReport { samples, derivative, rhs, satisfied_fraction })
}

/// Monitor the Lyapunov inequality along a recorded trajectory.
pub fn differential_inequality_monitor(
    trajectory: &[(f64, Field)],
    gauge: &GaugeFunction,
    params: &InequalityParams,
) -> Result<InequalityReport> {
    let mut t = Vec::new();
    let mut f = Vec::new();
    let mut xi = Vec::new();
    let mut l2 = Vec::new();
    for (s, u) in trajectory {
        let v = lyapunov_f(u, gauge)?;
        t.push(*s);
        f.push(v.f);
        xi.push(v.xi_star);
        l2.push(u.l2_norm());
    }
    inequality_from_series(&t, &f, &xi, &l2, params)
}

/// `C(1/(βR₀^{1/4}) + βL³/R₀^{7/4})`
pub fn lifespan_bound(r0: f64, beta: f64, length: f64, c: f64) -> f64 {
    c * (1.0 / (beta * r0.powf(0.25)) + beta * length.powi(3) / r0.powf(1.75))
}

/// Records `F` and `ξ*` alongside the integrator samples.
pub struct LyapunovProbe {
    gauge: GaugeFunction,
}

impl LyapunovProbe {
    pub fn new(gauge: GaugeFunction) -> LyapunovProbe {
        LyapunovProbe { gauge }
    }
}

impl Probe for LyapunovProbe {
    fn columns(&self) -> Vec<String> {
        vec!["F".into(), "xi_star".into()]
    }

    fn sample(&mut self, _: f64, u: &Field) -> Vec<f64> {
        match lyapunov_f(u, &self.gauge) {
            Ok(v) => vec![v.f, v.xi_star],
            Err(_) => vec![f64::NAN, f64::NAN],
        }
    }
}
