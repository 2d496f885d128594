//! Energies, spectra and the theorem-specific checks run on recorded series.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrator::{fit_growth, linear_fit, slope_stderr, Probe, Verdict};
use crate::models::{Bbm, HyperNs, SpectralModel};
use crate::numerics;
use crate::spectral::{mode_index, Field};

/// One row of the standard diagnostics table.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub l2: f64,
    pub h1_semi: f64,
    pub e_nls: Option<f64>,
    pub q_ratio: Option<f64>,
    pub f_lyapunov: Option<f64>,
    pub spectrum_id: Option<usize>,
}

impl DiagnosticsRow {
    pub fn of(t: f64, u: &Field) -> DiagnosticsRow {
        DiagnosticsRow {
            t,
            l2: u.l2_norm(),
            h1_semi: u.semi_h1_norm(),
            ..DiagnosticsRow::default()
        }
    }
}

/// `E = |uₓ|² − ½|u|⁴_{L⁴}`.
pub fn nls_energy(u: &Field) -> f64 {
    u.semi_h1_norm().powi(2) - 0.5 * u.l4_norm_pow4()
}

/// `φ = E + 2 Re ∫ f ū`.
pub fn nls_phi(u: &Field, f: Option<&Field>) -> Result<f64> {
    let e = nls_energy(u);
    Ok(match f {
        Some(f) => e + 2.0 * f.inner_product(u)?.re,
        None => e,
    })
}

/// Shell ratio `q = |Au|²/|u|²` of the velocity from vorticity coefficients.
pub fn q_ratio(model: &HyperNs, omega: &[Complex64]) -> f64 {
    model.velocity_a_sq(omega) / model.velocity_l2_sq(omega)
}

/// `Re(T(u), u)`, the rate of `½|u|²` under the model in its integration variable.
pub fn energy_rate(model: &dyn SpectralModel, u: &Field) -> Result<f64> {
    let t = model.tendency(u)?;
    Ok(t.inner_product(u)?.re)
}

/// Residual of `d/dt(|u|² + ε|uₓ|²) = −2ε|uₓ|²` (forward sign) and its scale.
pub fn bbm_modified_energy_residual(model: &Bbm, u: &Field) -> Result<(f64, f64)> {
    let t = model.tendency(u)?;
    let lhs = 2.0 * t.inner_product(u)?.re + 2.0 * model.epsilon * t.ddx(1).inner_product(&u.ddx(1))?.re;
    let ux2 = u.semi_h1_norm().powi(2);
    let rhs = -2.0 * model.epsilon * ux2 * model.direction().sign();
    let scale = (u.l2_norm().powi(2) + model.epsilon * ux2).max(f64::MIN_POSITIVE);
    Ok(((lhs - rhs).abs(), scale))
}

/// Outcome of a pointwise inequality check along a series.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundCheck {
    pub samples: usize,
    pub violations: usize,
    /// Largest `(value − bound)/max(bound, tiny)` over the series.
    pub worst_excess: f64,
}

impl BoundCheck {
    fn run(values: impl Iterator<Item = (f64, f64)>, upper: bool) -> BoundCheck {
        let mut c = BoundCheck { samples: 0, violations: 0, worst_excess: f64::NEG_INFINITY };
        for (v, b) in values {
            let excess = if upper { v - b } else { b - v } / b.abs().max(1e-300);
            c.samples += 1;
            if excess > 1e-9 {
                c.violations += 1;
            }
            c.worst_excess = c.worst_excess.max(excess);
        }
        c
    }

    pub fn holds(&self) -> bool {
        self.violations == 0
    }

    pub fn fraction(&self) -> f64 {
        if self.samples == 0 {
            1.0
        } else {
            1.0 - self.violations as f64 / self.samples as f64
        }
    }
}

/// Backward forced-KdV bound in `s = −t`:
/// `|u(s)|² ≤ e^{−βs}|u₀|² + (|f|²/β²)(1 − e^{−βs})`.
pub fn kdv_backward_bound(s: f64, beta: f64, u0_sq: f64, f_sq: f64) -> f64 {
    let e = (-beta * s).exp();
    e * u0_sq + f_sq / (beta * beta) * (1.0 - e)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KdvBoundReport {
    pub bound: BoundCheck,
    /// Largest `|u|²` over the final half of the run.
    pub terminal_sup: f64,
    pub terminal_limit: f64,
}

impl KdvBoundReport {
    pub fn passed(&self) -> bool {
        self.bound.holds() && self.terminal_sup <= 1.1 * self.terminal_limit
    }
}

pub fn kdv_bound_check(s: &[f64], l2: &[f64], beta: f64, f_norm: f64) -> Result<KdvBoundReport> {
    check_lengths(s, l2)?;
    let u0 = l2[0] * l2[0];
    let f2 = f_norm * f_norm;
    let bound = BoundCheck::run(
        s.iter().zip(l2).map(|(t, v)| (v * v, kdv_backward_bound(*t, beta, u0, f2))),
        true,
    );
    let half = s[s.len() - 1] * 0.5;
    let terminal_sup = s
        .iter()
        .zip(l2)
        .filter(|(t, _)| **t >= half)
        .map(|(_, v)| v * v)
        .fold(0.0, f64::max);
    Ok(KdvBoundReport { bound, terminal_sup, terminal_limit: f2 / (beta * beta) })
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidParameter("series lengths differ or are empty".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NlsBoundsReport {
    pub upper: BoundCheck,
    pub lower: BoundCheck,
    pub exponent: f64,
    pub band: (f64, f64),
}

impl NlsBoundsReport {
    pub fn passed(&self) -> bool {
        self.upper.holds()
            && self.lower.holds()
            && self.exponent >= self.band.0
            && self.exponent <= self.band.1
    }
}

/// Two-sided backward bounds on `|u(s)|²` and the growth exponent of `|u|`.
pub fn nls_bounds_check(s: &[f64], l2: &[f64], lambda: f64, f_norm: f64) -> Result<NlsBoundsReport> {
    check_lengths(s, l2)?;
    let u0 = l2[0] * l2[0];
    let f2 = f_norm * f_norm;
    let upper = BoundCheck::run(
        s.iter().zip(l2).map(|(t, v)| {
            let e = (3.0 * lambda * t).exp();
            (v * v, e * u0 + f2 / (3.0 * lambda * lambda) * (e - 1.0))
        }),
        true,
    );
    let lower = BoundCheck::run(
        s.iter().zip(l2).map(|(t, v)| {
            let e = (lambda * t).exp();
            (v * v, e * u0 + f2 / (lambda * lambda) * (1.0 - e))
        }),
        false,
    );
    let fit = fit_growth(s, l2)?;
    Ok(NlsBoundsReport {
        upper,
        lower,
        exponent: fit.exponent,
        band: (0.45 * lambda, 1.55 * lambda),
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NlsEnergyReport {
    pub phi_bound: BoundCheck,
    /// Growth exponent of `E` over samples where it is positive.
    pub energy_exponent: Option<f64>,
    pub h1_exponent: f64,
    pub energy_limit: f64,
    pub h1_limit: f64,
}

impl NlsEnergyReport {
    pub fn passed(&self) -> bool {
        self.phi_bound.holds()
            && self.energy_exponent.is_none_or(|p| p <= self.energy_limit)
            && self.h1_exponent <= self.h1_limit
    }
}

/// `φ(s) ≤ e^{2λs}φ(0) + ½(L/4 + |f|²)(e^{2λs} − 1)` and exponent bounds
/// `E ≲ e^{3λs}`, `‖u‖_{H¹} ≲ e^{9λs/2}`.
pub fn nls_energy_bound_check(
    s: &[f64],
    phi: &[f64],
    energy: &[f64],
    h1: &[f64],
    lambda: f64,
    length: f64,
    f_norm: f64,
) -> Result<NlsEnergyReport> {
    check_lengths(s, phi)?;
    check_lengths(s, energy)?;
    check_lengths(s, h1)?;
    let p0 = phi[0];
    let c = 0.5 * (0.25 * length + f_norm * f_norm);
    let phi_bound = BoundCheck::run(
        s.iter().zip(phi).map(|(t, v)| {
            let e = (2.0 * lambda * t).exp();
            (*v, e * p0 + c * (e - 1.0))
        }),
        true,
    );
    let (ts, es): (Vec<f64>, Vec<f64>) = s
        .iter()
        .zip(energy)
        .filter(|(_, e)| **e > 0.0)
        .map(|(t, e)| (*t, *e))
        .unzip();
    let energy_exponent = fit_growth(&ts, &es).ok().map(|g| g.exponent);
    let h1_exponent = fit_growth(s, h1)?.exponent;
    Ok(NlsEnergyReport {
        phi_bound,
        energy_exponent,
        h1_exponent,
        energy_limit: 3.0 * lambda + 0.05 * lambda,
        h1_limit: 4.5 * lambda + 0.05 * lambda,
    })
}

/// Closed-form blow-up time of `y′ = −2δy + (2α/L)y²` from `y₀`, if above threshold.
pub fn riccati_blowup_time(delta: f64, alpha: f64, length: f64, y0: f64) -> Option<f64> {
    let a = alpha / (delta * length);
    let z0 = 1.0 / y0;
    (y0 > delta * length / alpha).then(|| (a / (a - z0)).ln() / (2.0 * delta))
}

/// Closed-form solution of the Riccati comparison ODE, `None` past blow-up.
pub fn riccati_solution(delta: f64, alpha: f64, length: f64, y0: f64, s: f64) -> Option<f64> {
    let a = alpha / (delta * length);
    let z = (1.0 / y0 - a) * (2.0 * delta * s).exp() + a;
    (z > 0.0).then(|| 1.0 / z)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RiccatiReport {
    pub domination: BoundCheck,
    pub s1: Option<f64>,
    pub t_star: Option<f64>,
    pub verdict: String,
}

impl RiccatiReport {
    pub fn passed(&self) -> bool {
        let timely = match (self.t_star, self.s1) {
            (Some(t), Some(s1)) => t <= 1.1 * s1,
            _ => false,
        };
        self.domination.holds() && self.verdict == "blowup" && timely
    }
}

/// Compare `y = |u(s)|²` with the RK4 solution of the Riccati comparison ODE.
pub fn cgl_riccati_check(
    s: &[f64],
    y: &[f64],
    delta: f64,
    alpha: f64,
    length: f64,
    verdict: &Verdict,
) -> Result<RiccatiReport> {
    check_lengths(s, y)?;
    let rhs = |_: f64, v: f64| -2.0 * delta * v + 2.0 * alpha / length * v * v;
    let s1 = riccati_blowup_time(delta, alpha, length, y[0]);
    let mut pairs = Vec::new();
    let mut cur = y[0];
    for i in 0..s.len() {
        if i > 0 {
            let h = s[i] - s[i - 1];
            let n = ((h / 1e-4).ceil() as usize).max(4);
            cur = numerics::rk4(rhs, cur, s[i - 1], s[i], n).last().unwrap().1;
        }
        if !cur.is_finite() || cur > 1e12 * y[0] {
            break;
        }
        // stop once the comparison solution is within 1% of its singularity
        if s1.is_some_and(|t1| s[i] > 0.99 * t1) {
            break;
        }
        pairs.push((y[i], cur));
    }
    let domination = BoundCheck::run(pairs.into_iter().map(|(v, r)| (v, r * (1.0 - 1e-6))), false);
    let t_star = match verdict {
        Verdict::Blowup { t_lower, t_estimate } => Some(t_estimate.unwrap_or(*t_lower)),
        _ => None,
    };
    Ok(RiccatiReport { domination, s1, t_star, verdict: verdict.label().to_string() })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SandwichReport {
    pub upper: BoundCheck,
    /// Lower bound with the unit convention constant; diagnostic only.
    pub lower_fraction: f64,
    pub b: f64,
    pub q_final: f64,
    /// Relative oscillation of `q` over the final 20% of the run.
    pub q_oscillation: f64,
    pub q_settling: bool,
    pub shell: u64,
    pub shell_error: f64,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.upper.holds() && self.q_oscillation < 0.05 && self.q_settling && self.shell_error < 0.05
    }
}

/// Upper/lower exponential bounds on the velocity norm and convergence of `q`.
pub fn hyperns_sandwich_check(
    t: &[f64],
    velocity: &[f64],
    q: &[f64],
    nu: f64,
    length: f64,
) -> Result<SandwichReport> {
    check_lengths(t, velocity)?;
    check_lengths(t, q)?;
    let lambda1 = (2.0 * std::f64::consts::PI / length).powi(2);
    let u0 = velocity[0];
    let upper = BoundCheck::run(
        t.iter().zip(velocity).map(|(s, v)| (*v, (-nu * lambda1 * lambda1 * s).exp() * u0)),
        true,
    );
    let b = nu * q[0] * (u0 * u0 / (nu.powf(1.5) * lambda1 * lambda1)).exp();
    let lower = BoundCheck::run(t.iter().zip(velocity).map(|(s, v)| (*v, (-b * s).exp() * u0)), false);
    let n = t.len();
    let q_final = q[n - 1];
    let start = n - (n / 5).max(2).min(n);
    let window = &q[start..];
    let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
    let q_oscillation = (hi - lo) / q_final.abs().max(f64::MIN_POSITIVE);
    let dev: Vec<f64> = window.iter().map(|v| (v - q_final).abs()).collect();
    let half = dev.len() / 2;
    let first = dev[..half.max(1)].iter().copied().fold(0.0, f64::max);
    let second = dev[half..].iter().copied().fold(0.0, f64::max);
    let q_settling = second <= first;
    let unit = (2.0 * std::f64::consts::PI / length).powi(4);
    let (shell, shell_error) = (1..=64u64)
        .map(|j| (j, ((q_final - unit * (j * j) as f64) / (unit * (j * j) as f64)).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Ok(SandwichReport {
        upper,
        lower_fraction: lower.fraction(),
        b,
        q_final,
        q_oscillation,
        q_settling,
        shell,
        shell_error,
    })
}

/// Modal (1D) or unit-shell (2D) energy distribution.
///
/// 1D: `E_k = L|û_k|²` for `k ≥ 1` (one member of each conjugate pair,
/// averaged over `±k`; the Nyquist mode counts half), so `|u|² = L|û₀|² + 2Σ E_k`.
/// 2D: `E_κ = L₁L₂ Σ_{κ−½ ≤ |m| < κ+½} |û_m|²` over integer mode radii, so
/// `|u|² = Σ E_κ`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Spectrum {
    pub dim: usize,
    pub k: Vec<f64>,
    pub energy: Vec<f64>,
    pub mean_energy: f64,
    pub k_max: f64,
    /// Wavenumber `2π/L` of mode index 1.
    pub unit: f64,
}

impl Spectrum {
    /// Total energy reassembled by the convention of [`Spectrum`].
    pub fn total(&self) -> f64 {
        let s: f64 = self.energy.iter().sum();
        if self.dim == 1 { self.mean_energy + 2.0 * s } else { s }
    }

    /// `ν Σ |k|² E_k`, the dissipation rate entering `½ d/ds|u|² = ν|uₓ|²`.
    pub fn dissipation(&self, nu: f64) -> f64 {
        let w = if self.dim == 1 { 2.0 } else { 1.0 };
        nu * w * self
            .k
            .iter()
            .zip(&self.energy)
            .map(|(k, e)| (k * self.unit).powi(2) * e)
            .sum::<f64>()
    }

    /// Geometric-mean bins of `bins_per_decade` per decade.
    pub fn log_binned(&self, bins_per_decade: usize) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64, usize)> = Vec::new();
        let mut key_of = Vec::new();
        for (k, e) in self.k.iter().zip(&self.energy) {
            if *k < 1.0 || *e <= 0.0 {
                continue;
            }
            let key = (k.log10() * bins_per_decade as f64).floor() as i64;
            match key_of.iter().position(|x| *x == key) {
                Some(i) => {
                    out[i].0 += k.ln();
                    out[i].1 += e.ln();
                    out[i].2 += 1;
                }
                None => {
                    key_of.push(key);
                    out.push((k.ln(), e.ln(), 1));
                }
            }
        }
        out.into_iter()
            .map(|(lk, le, n)| ((lk / n as f64).exp(), (le / n as f64).exp()))
            .collect()
    }

    pub fn to_csv_rows(&self) -> Vec<(f64, f64)> {
        self.k.iter().copied().zip(self.energy.iter().copied()).collect()
    }
}

pub fn compute_spectrum(u: &Field) -> Spectrum {
    let grid = u.grid();
    let c = u.coeffs();
    let vol = grid.volume();
    let (k, energy) = if grid.dim() == 1 {
        let n = grid.n(0);
        let half = n / 2;
        let mut e = vec![0.0; half];
        for (i, z) in c.iter().enumerate().skip(1) {
            let j = mode_index(i, n).unsigned_abs() as usize;
            e[j - 1] += 0.5 * vol * z.norm_sqr();
        }
        ((1..=half).map(|j| j as f64).collect::<Vec<_>>(), e)
    } else {
        let (n0, n1) = (grid.n(0), grid.n(1));
        let shells = ((n0 * n0 + n1 * n1) as f64).sqrt() as usize / 2 + 2;
        let mut e = vec![0.0; shells];
        for (f, z) in c.iter().enumerate() {
            let (a, b) = grid.modes(f);
            let r = ((a * a + b * b) as f64).sqrt().round() as usize;
            e[r] += vol * z.norm_sqr();
        }
        while e.len() > 1 && e[e.len() - 1] == 0.0 {
            e.pop();
        }
        ((0..e.len()).map(|j| j as f64).collect(), e)
    };
    let mean_energy = vol * c[0].norm_sqr();
    let total: f64 = energy.iter().sum();
    let mut tail = total;
    let mut k_max = 0.0;
    for (kk, e) in k.iter().zip(&energy) {
        if tail < 1e-6 * total {
            break;
        }
        tail -= e;
        k_max = *kk;
    }
    Spectrum {
        dim: grid.dim(),
        k,
        energy,
        mean_energy,
        k_max,
        unit: 2.0 * std::f64::consts::PI / grid.length(0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub band: (f64, f64),
    pub points: usize,
}

/// Least-squares slope of `log E_k` against `log k` on `[k_lo, k_hi]`.
pub fn fit_spectral_slope(spec: &Spectrum, k_lo: f64, k_hi: f64) -> Result<SlopeFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = spec
        .k
        .iter()
        .zip(&spec.energy)
        .filter(|(k, e)| **k >= k_lo && **k <= k_hi && **e > 0.0)
        .map(|(k, e)| (k.ln(), e.ln()))
        .unzip();
    if x.len() < 3 {
        return Err(Error::InvalidParameter(format!("band [{k_lo}, {k_hi}] has {} points", x.len())));
    }
    let (a, b, _) = linear_fit(&x, &y);
    Ok(SlopeFit { slope: b, intercept: a, stderr: slope_stderr(&x, &y), band: (k_lo, k_hi), points: x.len() })
}

/// Log-log slope of `y` against `x` with its standard error.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_lengths(x, y)?;
    if x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (_, b, _) = linear_fit(&lx, &ly);
    let err = if x.len() > 2 { slope_stderr(&lx, &ly) } else { 0.0 };
    Ok((b, err))
}

/// Records `E` and `φ` of NLS states.
pub struct NlsProbe {
    forcing: Option<Field>,
}

impl NlsProbe {
    pub fn new(forcing: Option<Field>) -> NlsProbe {
        NlsProbe { forcing }
    }
}

impl Probe for NlsProbe {
    fn columns(&self) -> Vec<String> {
        vec!["E".into(), "phi".into()]
    }

    fn sample(&mut self, _: f64, u: &Field) -> Vec<f64> {
        let e = nls_energy(u);
        vec![e, nls_phi(u, self.forcing.as_ref()).unwrap_or(f64::NAN)]
    }
}

/// Records the velocity norm and `q` from vorticity.
pub struct HyperNsProbe {
    model: HyperNs,
}

impl HyperNsProbe {
    pub fn new(model: HyperNs) -> HyperNsProbe {
        HyperNsProbe { model }
    }
}

impl Probe for HyperNsProbe {
    fn columns(&self) -> Vec<String> {
        vec!["velocity".into(), "q".into()]
    }

    fn sample(&mut self, _: f64, u: &Field) -> Vec<f64> {
        let c = u.coeffs();
        vec![self.model.velocity_l2_sq(&c).sqrt(), q_ratio(&self.model, &c)]
    }
}

/// Records the relative residual of the BBM modified-energy law.
pub struct BbmProbe {
    model: Bbm,
}

impl BbmProbe {
    pub fn new(model: Bbm) -> BbmProbe {
        BbmProbe { model }
    }
}

impl Probe for BbmProbe {
    fn columns(&self) -> Vec<String> {
        vec!["modified_energy".into(), "energy_residual".into()]
    }

    fn sample(&mut self, _: f64, u: &Field) -> Vec<f64> {
        let m = u.l2_norm().powi(2) + self.model.epsilon * u.semi_h1_norm().powi(2);
        let r = bbm_modified_energy_residual(&self.model, u)
            .map(|(r, s)| r / s)
            .unwrap_or(f64::NAN);
        vec![m, r]
    }
}

/// Records the energy-identity residual `|Re(T(u),u) − expected|` relative to `|u|²`.
pub struct EnergyIdentityProbe<F: Fn(&Field) -> f64> {
    model: Arc<dyn SpectralModel>,
    expected: F,
}

impl<F: Fn(&Field) -> f64> EnergyIdentityProbe<F> {
    pub fn new(model: Arc<dyn SpectralModel>, expected: F) -> Self {
        EnergyIdentityProbe { model, expected }
    }
}

impl<F: Fn(&Field) -> f64> Probe for EnergyIdentityProbe<F> {
    fn columns(&self) -> Vec<String> {
        vec!["energy_residual".into()]
    }

    fn sample(&mut self, _: f64, u: &Field) -> Vec<f64> {
        let r = energy_rate(self.model.as_ref(), u).map(|v| v - (self.expected)(u));
        let scale = u.l2_norm().powi(2).max(f64::MIN_POSITIVE);
        vec![r.map(|v| v.abs() / scale).unwrap_or(f64::NAN)]
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::spectral::SpectralGrid;
    use crate::integrator::{integrate_with, IntegratorConfig};
    use crate::models::{Direction, Kbs, Nls};
    use crate::ScalarKind;

    fn grid(n: usize) -> Arc<SpectralGrid> {
        Arc::new(SpectralGrid::new_1d(n, 2.0 * PI).unwrap())
    }

    #[test]
    fn sine_spectrum_convention() {
        let g = grid(64);
        let u = Field::from_fn(&g, f64::sin);
        let s = compute_spectrum(&u);
        assert!((s.energy[0] - 2.0 * PI / 4.0).abs() < 1e-13);
        assert!((s.total() - u.l2_norm().powi(2)).abs() < 1e-12);
        assert_eq!(s.k_max, 1.0);
        assert!((s.dissipation(1.0) - u.semi_h1_norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn parseval_for_random_fields() {
        let g = grid(128);
        let u = Field::from_fn(&g, |x| (3.0 * x).cos() + 0.2 * (17.0 * x).sin() + 0.7 + 0.01 * (64.0 * x).cos());
        let s = compute_spectrum(&u);
        assert!((s.total() - u.l2_norm().powi(2)).abs() < 1e-12 * s.total());
        let c = Field::from_fn_complex(&g, |x| Complex64::new(x.cos(), (2.0 * x).sin()));
        let s = compute_spectrum(&c);
        assert!((s.total() - c.l2_norm().powi(2)).abs() < 1e-12 * s.total());
        let g2 = Arc::new(SpectralGrid::new_2d(32, 2.0 * PI, 32, 2.0 * PI).unwrap());
        let w = Field::from_fn_2d(&g2, |x, y| (x + 2.0 * y).sin() + (3.0 * x).cos() * y.cos());
        let s = compute_spectrum(&w);
        assert!((s.total() - w.l2_norm().powi(2)).abs() < 1e-12 * s.total());
        assert!(s.energy[2] > 0.0 && s.energy[3] > 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let g = grid(256);
        let u = Field::from_fn(&g, |x| (1..=80).map(|k| (k as f64 * x).sin() / k as f64).sum());
        let s = compute_spectrum(&u);
        let fit = fit_spectral_slope(&s, 3.0, 30.0).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-10);
        assert!(fit_spectral_slope(&s, 3.0, 4.0).is_err());
        let bins = s.log_binned(5);
        assert!(bins.len() >= 5);
    }

    #[test]
    fn riccati_closed_form_and_rk4() {
        let l = 2.0 * PI;
        let y0 = 4.0 * PI;
        let s1 = riccati_blowup_time(1.0, 1.0, l, y0).unwrap();
        assert!((s1 - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!(riccati_blowup_time(1.0, 1.0, l, 2.0 * PI).is_none());
        let rhs = |_: f64, v: f64| -2.0 * v + 2.0 / l * v * v;
        let tr = numerics::rk4(rhs, y0, 0.0, 0.3, 30000);
        let exact = riccati_solution(1.0, 1.0, l, y0, 0.3).unwrap();
        assert!((tr.last().unwrap().1 - exact).abs() < 1e-8 * exact);
        // threshold is an equilibrium
        let eq = numerics::rk4(rhs, 2.0 * PI, 0.0, 1.0, 100);
        assert!((eq.last().unwrap().1 - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn riccati_check_on_exact_solution() {
        let l = 2.0 * PI;
        let y0 = 4.0 * PI;
        let s: Vec<f64> = (0..300).map(|i| i as f64 * 0.001).collect();
        let y: Vec<f64> = s.iter().map(|t| riccati_solution(1.0, 1.0, l, y0, *t).unwrap() * (1.0 + t)).collect();
        let v = Verdict::Blowup { t_lower: 0.33, t_estimate: Some(0.34) };
        let r = cgl_riccati_check(&s, &y, 1.0, 1.0, l, &v).unwrap();
        assert!(r.passed(), "{r:?}");
        let y: Vec<f64> = s.iter().map(|t| riccati_solution(1.0, 1.0, l, y0, *t).unwrap() * (1.0 - t)).collect();
        assert!(!cgl_riccati_check(&s, &y, 1.0, 1.0, l, &v).unwrap().passed());
    }

    #[test]
    fn kdv_bound_formula() {
        assert_eq!(kdv_backward_bound(0.0, 1.0, 4.0, 1.0), 4.0);
        assert!((kdv_backward_bound(1e3, 2.0, 4.0, 1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn nls_bounds_without_forcing() {
        let s: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let l2: Vec<f64> = s.iter().map(|t| (0.1 * t).exp() * 1e-4).collect();
        let r = nls_bounds_check(&s, &l2, 0.1, 0.0).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!((r.exponent - 0.1).abs() < 1e-10);
        let fast: Vec<f64> = s.iter().map(|t| (0.2 * t).exp() * 1e-4).collect();
        assert!(!nls_bounds_check(&s, &fast, 0.1, 0.0).unwrap().passed());
    }

    #[test]
    fn plane_wave_energy() {
        let g = grid(64);
        let (k, a) = (3.0, 0.7);
        let u = Field::from_fn_complex(&g, |x| Complex64::from_polar(a, k * x));
        let l = 2.0 * PI;
        let e = k * k * a * a * l - 0.5 * a.powi(4) * l;
        assert!((nls_energy(&u) - e).abs() < 1e-12);
        assert_eq!(u.kind(), ScalarKind::Complex);
    }

    #[test]
    fn nls_mass_identity_along_run() {
        let g = grid(64);
        let m = Nls::new(&g, 0.1).unwrap().with_direction(Direction::Backward);
        let u0 = Field::from_fn_complex(&g, |x| Complex64::new(1e-3 * x.cos(), 1e-3 * (2.0 * x).sin()));
        let model: Arc<dyn SpectralModel> = Arc::new(m.clone());
        let mut probe = EnergyIdentityProbe::new(model, |u: &Field| 0.1 * u.l2_norm().powi(2));
        let rec = integrate_with(&u0, &m, &IntegratorConfig::fixed(0.01, 1.0), &mut probe).unwrap();
        let res = rec.column("energy_residual").unwrap();
        assert!(res.iter().all(|r| *r < 1e-8), "{res:?}");
    }

    #[test]
    fn hyperns_eigenflow_sandwich() {
        let g2 = Arc::new(SpectralGrid::new_2d(16, 2.0 * PI, 16, 2.0 * PI).unwrap());
        let m = HyperNs::new(&g2, 1.0).unwrap();
        let w0 = Field::from_fn_2d(&g2, |x, _| x.cos());
        let mut probe = HyperNsProbe::new(m.clone());
        let rec = integrate_with(&w0, &m, &IntegratorConfig::fixed(0.01, 2.0), &mut probe).unwrap();
        let v = rec.column("velocity").unwrap();
        let q = rec.column("q").unwrap();
        for (t, vv) in rec.times().iter().zip(&v) {
            assert!((vv / v[0] - (-t).exp()).abs() < 1e-8);
        }
        let r = hyperns_sandwich_check(&rec.times(), &v, &q, 1.0, 2.0 * PI).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.shell, 1);
    }

    #[test]
    fn bbm_residual_is_small() {
        let g = grid(64);
        let m = Bbm::new(&g, 0.05).unwrap();
        let u = Field::from_fn(&g, |x| x.sin() + 0.3 * (2.0 * x).cos()).with_zero_mean();
        let (r, s) = bbm_modified_energy_residual(&m, &u).unwrap();
        assert!(r < 1e-12 * s);
        let b = m.with_direction(Direction::Backward);
        let (r, s) = bbm_modified_energy_residual(&b, &u).unwrap();
        assert!(r < 1e-12 * s);
    }

    #[test]
    fn kbs_energy_rate() {
        let g = grid(64);
        let m = Kbs::new(&g, 0.5, 0.2, 1.0).unwrap();
        let u = Field::from_fn(&g, |x| x.sin() + 0.3 * (2.0 * x).cos()).with_zero_mean();
        let expect = -0.5 * u.semi_h1_norm().powi(2) + 0.2 * u.l2_norm().powi(2);
        assert!((energy_rate(&m, &u).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn loglog_slope_exact() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(2.5)).collect();
        let (b, e) = loglog_slope(&x, &y).unwrap();
        assert!((b - 2.5).abs() < 1e-12 && e < 1e-10);
    }
}
