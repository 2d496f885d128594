//! Tendencies of the model equations, split into a diagonal linear symbol and
//! a nonlinear remainder for exponential and IMEX integrators.
//!
//! Every model is written for the forward time direction. A backward model
//! integrates the sign-flipped tendency in `s = -t`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{dealiased_product, differentiate, Field, ScalarKind, SpectralGrid};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// An evolution equation `u_t = σ(k) û + N(u)` on a spectral grid.
pub trait SpectralModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn grid(&self) -> &Arc<SpectralGrid>;
    fn kind(&self) -> ScalarKind;
    fn zero_mean(&self) -> bool;
    fn direction(&self) -> Direction;

    /// Forward-time linear symbol at a flat spectral index.
    fn forward_symbol(&self, flat: usize) -> Complex64;

    /// Forward-time nonlinear part (including forcing) from coefficients.
    fn forward_nonlinear(&self, coeffs: &[Complex64]) -> Vec<Complex64>;

    /// Linear symbol in the integration variable.
    fn symbol(&self, flat: usize) -> Complex64 {
        self.forward_symbol(flat) * self.direction().sign()
    }

    /// Nonlinear part in the integration variable.
    fn nonlinear(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut n = self.forward_nonlinear(coeffs);
        if self.direction() == Direction::Backward {
            for v in &mut n {
                *v = -*v;
            }
        }
        n
    }

    /// Full tendency from coefficients, in the integration variable.
    fn tendency_coeffs(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut n = self.nonlinear(coeffs);
        for (f, (v, c)) in n.iter_mut().zip(coeffs).enumerate() {
            *v += self.symbol(f) * c;
        }
        if self.zero_mean() {
            n[0] = ZERO;
        }
        n
    }

    /// Validate `u` against the model's phase space.
    fn check(&self, u: &Field) -> Result<()> {
        if **u.grid() != **self.grid() {
            return Err(Error::GridMismatch);
        }
        if self.kind() == ScalarKind::Real {
            u.require_real()?;
        }
        if self.zero_mean() {
            u.require_zero_mean(1e-10)?;
        }
        Ok(())
    }

    /// Tendency as a spectral field.
    fn tendency(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let t = self.tendency_coeffs(&u.coeffs());
        let f = Field::from_spectral(self.grid(), self.kind(), t)?;
        Ok(if self.zero_mean() { f.with_zero_mean() } else { f })
    }
}

fn conj_coeffs(grid: &SpectralGrid, c: &[Complex64]) -> Vec<Complex64> {
    let (n0, n1) = (grid.n(0), grid.n(1));
    let mut out = vec![ZERO; c.len()];
    for i0 in 0..n0 {
        for i1 in 0..n1 {
            let g = ((n0 - i0) % n0) * n1 + (n1 - i1) % n1;
            out[i0 * n1 + i1] = c[g].conj();
        }
    }
    out
}

/// `P(|u|²u)` as two masked binary products.
pub fn dealiased_cubic(grid: &SpectralGrid, c: &[Complex64]) -> Vec<Complex64> {
    let cc = conj_coeffs(grid, c);
    let mut m = dealiased_product(grid, c, &cc, false);
    // |u|² is real
    crate::spectral::symmetrize(grid, &mut m);
    dealiased_product(grid, &m, c, false)
}

/// `P(u uₓ)` for a real 1D field, written as `½ ∂ₓ P(u²)`.
pub fn dealiased_advection(grid: &SpectralGrid, c: &[Complex64]) -> Vec<Complex64> {
    let mut sq = dealiased_product(grid, c, c, true);
    differentiate(grid, &mut sq, 0, 1);
    for v in &mut sq {
        *v *= 0.5;
    }
    sq
}

fn forcing_coeffs(grid: &Arc<SpectralGrid>, f: &Field) -> Result<Vec<Complex64>> {
    if **f.grid() != **grid {
        return Err(Error::GridMismatch);
    }
    Ok(f.coeffs())
}

/// KdV–Burgers–Sivashinsky: `u_t − νuₓₓ + uuₓ − βu + γuₓₓₓ = f`.
#[derive(Debug, Clone)]
pub struct Kbs {
    grid: Arc<SpectralGrid>,
    pub nu: f64,
    pub beta: f64,
    pub gamma: f64,
    forcing: Option<Vec<Complex64>>,
    pub direction: Direction,
}

impl Kbs {
    pub fn new(grid: &Arc<SpectralGrid>, nu: f64, beta: f64, gamma: f64) -> Result<Kbs> {
        if grid.dim() != 1 {
            return Err(Error::InvalidParameter("KBS is one-dimensional".into()));
        }
        if !(nu >= 0.0) {
            return Err(Error::InvalidParameter(format!("ν = {nu} must be ≥ 0")));
        }
        Ok(Kbs {
            grid: grid.clone(),
            nu,
            beta,
            gamma,
            forcing: None,
            direction: Direction::Forward,
        })
    }

    /// Attach a zero-mean real forcing.
    pub fn with_forcing(mut self, f: &Field) -> Result<Kbs> {
        f.require_real()?;
        f.require_zero_mean(1e-12)?;
        let mut c = forcing_coeffs(&self.grid, f)?;
        c[0] = ZERO;
        self.forcing = Some(c);
        Ok(self)
    }

    pub fn with_direction(mut self, d: Direction) -> Kbs {
        self.direction = d;
        self
    }

    pub fn forcing(&self) -> Option<Field> {
        self.forcing.as_ref().map(|c| {
            Field::from_spectral(&self.grid, ScalarKind::Real, c.clone())
                .expect("grid-sized")
                .with_zero_mean()
        })
    }

    /// `|f|` in L².
    pub fn forcing_norm(&self) -> f64 {
        self.forcing.as_ref().map_or(0.0, |c| {
            crate::spectral::spectral_l2_sq(&self.grid, c).sqrt()
        })
    }
}

impl SpectralModel for Kbs {
    fn name(&self) -> &'static str {
        "kbs"
    }
    fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }
    fn kind(&self) -> ScalarKind {
        ScalarKind::Real
    }
    fn zero_mean(&self) -> bool {
        true
    }
    fn direction(&self) -> Direction {
        self.direction
    }
    fn forward_symbol(&self, flat: usize) -> Complex64 {
        let k = self.grid.wavevector(flat).0;
        let disp = if self.grid.is_nyquist(flat, 0) {
            0.0
        } else {
            self.gamma * k * k * k
        };
        Complex64::new(-self.nu * k * k + self.beta, disp)
    }
    fn forward_nonlinear(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut n = dealiased_advection(&self.grid, c);
        for v in &mut n {
            *v = -*v;
        }
        if let Some(f) = &self.forcing {
            for (v, g) in n.iter_mut().zip(f) {
                *v += g;
            }
        }
        n
    }
}

/// Damped driven NLS: `i u_t + uₓₓ + |u|²u + iλu = f`.
#[derive(Debug, Clone)]
pub struct Nls {
    grid: Arc<SpectralGrid>,
    pub lambda: f64,
    forcing: Option<Vec<Complex64>>,
    pub direction: Direction,
}

impl Nls {
    pub fn new(grid: &Arc<SpectralGrid>, lambda: f64) -> Result<Nls> {
        if grid.dim() != 1 {
            return Err(Error::InvalidParameter("NLS is one-dimensional".into()));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("λ = {lambda} must be > 0")));
        }
        Ok(Nls {
            grid: grid.clone(),
            lambda,
            forcing: None,
            direction: Direction::Forward,
        })
    }

    pub fn with_forcing(mut self, f: &Field) -> Result<Nls> {
        self.forcing = Some(forcing_coeffs(&self.grid, f)?);
        Ok(self)
    }

    pub fn with_direction(mut self, d: Direction) -> Nls {
        self.direction = d;
        self
    }

    pub fn forcing(&self) -> Option<Field> {
        self.forcing.as_ref().map(|c| {
            Field::from_spectral(&self.grid, ScalarKind::Complex, c.clone()).expect("grid-sized")
        })
    }

    pub fn forcing_norm(&self) -> f64 {
        self.forcing.as_ref().map_or(0.0, |c| {
            crate::spectral::spectral_l2_sq(&self.grid, c).sqrt()
        })
    }
}

impl SpectralModel for Nls {
    fn name(&self) -> &'static str {
        "nls"
    }
    fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }
    fn kind(&self) -> ScalarKind {
        ScalarKind::Complex
    }
    fn zero_mean(&self) -> bool {
        false
    }
    fn direction(&self) -> Direction {
        self.direction
    }
    fn forward_symbol(&self, flat: usize) -> Complex64 {
        let k2 = self.grid.k_squared(flat);
        Complex64::new(-self.lambda, -k2)
    }
    fn forward_nonlinear(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut n = dealiased_cubic(&self.grid, c);
        for v in &mut n {
            *v *= I;
        }
        if let Some(f) = &self.forcing {
            for (v, g) in n.iter_mut().zip(f) {
                *v -= I * g;
            }
        }
        n
    }
}

/// Complex Ginzburg–Landau: `u_t − (a+bi)uₓₓ − δu + (α+βi)|u|²u = 0`.
#[derive(Debug, Clone)]
pub struct Cgl {
    grid: Arc<SpectralGrid>,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub direction: Direction,
}

impl Cgl {
    pub fn new(
        grid: &Arc<SpectralGrid>,
        a: f64,
        b: f64,
        delta: f64,
        alpha: f64,
        beta: f64,
    ) -> Result<Cgl> {
        if grid.dim() != 1 {
            return Err(Error::InvalidParameter("CGL is one-dimensional".into()));
        }
        if !(a >= 0.0) {
            return Err(Error::InvalidParameter(format!("a = {a} must be ≥ 0")));
        }
        Ok(Cgl {
            grid: grid.clone(),
            a,
            b,
            delta,
            alpha,
            beta,
            direction: Direction::Forward,
        })
    }

    pub fn with_direction(mut self, d: Direction) -> Cgl {
        self.direction = d;
        self
    }
}

impl SpectralModel for Cgl {
    fn name(&self) -> &'static str {
        "cgl"
    }
    fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }
    fn kind(&self) -> ScalarKind {
        ScalarKind::Complex
    }
    fn zero_mean(&self) -> bool {
        false
    }
    fn direction(&self) -> Direction {
        self.direction
    }
    fn forward_symbol(&self, flat: usize) -> Complex64 {
        let k2 = self.grid.k_squared(flat);
        Complex64::new(-self.a * k2 + self.delta, -self.b * k2)
    }
    fn forward_nonlinear(&self, c: &[Complex64]) -> Vec<Complex64> {
        let coef = -Complex64::new(self.alpha, self.beta);
        let mut n = dealiased_cubic(&self.grid, c);
        for v in &mut n {
            *v *= coef;
        }
        n
    }
}

/// Unforced hyperviscous 2D Navier–Stokes in vorticity form:
/// `ω_t + νΔ²ω + J(ψ, ω) = 0` with `Δψ = ω`.
#[derive(Debug, Clone)]
pub struct HyperNs {
    grid: Arc<SpectralGrid>,
    pub nu: f64,
    pub direction: Direction,
}

impl HyperNs {
    pub fn new(grid: &Arc<SpectralGrid>, nu: f64) -> Result<HyperNs> {
        if grid.dim() != 2 {
            return Err(Error::InvalidParameter(
                "hyperviscous NSE is two-dimensional".into(),
            ));
        }
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter(format!("ν = {nu} must be > 0")));
        }
        Ok(HyperNs {
            grid: grid.clone(),
            nu,
            direction: Direction::Forward,
        })
    }

    pub fn with_direction(mut self, d: Direction) -> HyperNs {
        self.direction = d;
        self
    }

    /// Streamfunction coefficients `ψ̂ = −ω̂/|k|²`.
    pub fn streamfunction(&self, omega: &[Complex64]) -> Vec<Complex64> {
        omega
            .iter()
            .enumerate()
            .map(|(f, w)| {
                let k2 = self.grid.k_squared(f);
                if k2 == 0.0 {
                    ZERO
                } else {
                    -w / k2
                }
            })
            .collect()
    }

    /// Dealiased Jacobian `J(ψ, ω) = ψ_{x₁}ω_{x₂} − ψ_{x₂}ω_{x₁}`.
    pub fn jacobian(&self, omega: &[Complex64]) -> Vec<Complex64> {
        let g = &self.grid;
        let psi = self.streamfunction(omega);
        let d = |c: &[Complex64], axis| {
            let mut v = c.to_vec();
            differentiate(g, &mut v, axis, 1);
            v
        };
        let a = dealiased_product(g, &d(&psi, 0), &d(omega, 1), true);
        let b = dealiased_product(g, &d(&psi, 1), &d(omega, 0), true);
        a.iter().zip(&b).map(|(x, y)| x - y).collect()
    }

    /// Kinetic energy `|u|² = L₁L₂ Σ |ω̂|²/|k|²`.
    pub fn velocity_l2_sq(&self, omega: &[Complex64]) -> f64 {
        let g = &self.grid;
        omega
            .iter()
            .enumerate()
            .filter(|(f, _)| g.k_squared(*f) > 0.0)
            .map(|(f, w)| w.norm_sqr() / g.k_squared(f))
            .sum::<f64>()
            * g.volume()
    }

    /// `|Au|² = L₁L₂ Σ |k|²|ω̂|²`.
    pub fn velocity_a_sq(&self, omega: &[Complex64]) -> f64 {
        crate::spectral::spectral_semi_h1_sq(&self.grid, omega)
    }
}

impl SpectralModel for HyperNs {
    fn name(&self) -> &'static str {
        "hyperns"
    }
    fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }
    fn kind(&self) -> ScalarKind {
        ScalarKind::Real
    }
    fn zero_mean(&self) -> bool {
        true
    }
    fn direction(&self) -> Direction {
        self.direction
    }
    fn forward_symbol(&self, flat: usize) -> Complex64 {
        let k2 = self.grid.k_squared(flat);
        Complex64::new(-self.nu * k2 * k2, 0.0)
    }
    fn forward_nonlinear(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut j = self.jacobian(c);
        for v in &mut j {
            *v = -*v;
        }
        j
    }
}

/// Viscous BBM-regularized KdV: `u_t + uuₓ + uₓₓₓ = ε(uₓₓ + uₓₓₜ)`.
#[derive(Debug, Clone)]
pub struct Bbm {
    grid: Arc<SpectralGrid>,
    pub epsilon: f64,
    pub direction: Direction,
}

impl Bbm {
    pub fn new(grid: &Arc<SpectralGrid>, epsilon: f64) -> Result<Bbm> {
        if grid.dim() != 1 {
            return Err(Error::InvalidParameter("BBM is one-dimensional".into()));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("ε = {epsilon} must be ≥ 0")));
        }
        Ok(Bbm {
            grid: grid.clone(),
            epsilon,
            direction: Direction::Forward,
        })
    }

    pub fn with_direction(mut self, d: Direction) -> Bbm {
        self.direction = d;
        self
    }

    fn denom(&self, flat: usize) -> f64 {
        1.0 + self.epsilon * self.grid.k_squared(flat)
    }
}

impl SpectralModel for Bbm {
    fn name(&self) -> &'static str {
        "bbm"
    }
    fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }
    fn kind(&self) -> ScalarKind {
        ScalarKind::Real
    }
    fn zero_mean(&self) -> bool {
        true
    }
    fn direction(&self) -> Direction {
        self.direction
    }
    fn forward_symbol(&self, flat: usize) -> Complex64 {
        let k = self.grid.wavevector(flat).0;
        let disp = if self.grid.is_nyquist(flat, 0) {
            0.0
        } else {
            k * k * k
        };
        Complex64::new(-self.epsilon * k * k, disp) / self.denom(flat)
    }
    fn forward_nonlinear(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut n = dealiased_advection(&self.grid, c);
        for (f, v) in n.iter_mut().enumerate() {
            *v = -*v / self.denom(f);
        }
        n
    }
}

/// Diagonal linear model `û_t = σ(k) û`, used as an integrator oracle.
#[derive(Debug, Clone)]
pub struct Linear {
    grid: Arc<SpectralGrid>,
    kind: ScalarKind,
    symbols: Vec<Complex64>,
}

impl Linear {
    pub fn new(
        grid: &Arc<SpectralGrid>,
        kind: ScalarKind,
        symbol: impl Fn(f64) -> Complex64,
    ) -> Linear {
        let symbols = (0..grid.len())
            .map(|f| symbol(grid.wavevector(f).0))
            .collect();
        Linear {
            grid: grid.clone(),
            kind,
            symbols,
        }
    }
}

impl SpectralModel for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }
    fn kind(&self) -> ScalarKind {
        self.kind
    }
    fn zero_mean(&self) -> bool {
        false
    }
    fn direction(&self) -> Direction {
        Direction::Forward
    }
    fn forward_symbol(&self, flat: usize) -> Complex64 {
        self.symbols[flat]
    }
    fn forward_nonlinear(&self, c: &[Complex64]) -> Vec<Complex64> {
        vec![ZERO; c.len()]
    }
}

/// Perturbation `εq` added to KdV `ũ_t + ũũₓ + ũₓₓₓ = εq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbedKdvKind {
    /// `q = −ũ`
    Damped,
    /// `q = ũₓₓ`
    Viscous,
    /// `q = ũₓₓ + ũₓₓₜ`
    ViscousBbm,
}

impl PerturbedKdvKind {
    pub fn build(
        self,
        grid: &Arc<SpectralGrid>,
        epsilon: f64,
        direction: Direction,
    ) -> Result<Box<dyn SpectralModel>> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("ε = {epsilon} must be > 0")));
        }
        Ok(match self {
            PerturbedKdvKind::Damped => {
                Box::new(Kbs::new(grid, 0.0, -epsilon, 1.0)?.with_direction(direction))
            }
            PerturbedKdvKind::Viscous => {
                Box::new(Kbs::new(grid, epsilon, 0.0, 1.0)?.with_direction(direction))
            }
            PerturbedKdvKind::ViscousBbm => {
                Box::new(Bbm::new(grid, epsilon)?.with_direction(direction))
            }
        })
    }

    /// Warning text when `ε` leaves the small-perturbation regime.
    pub fn epsilon_warning(epsilon: f64) -> Option<String> {
        (epsilon > 0.1).then(|| format!("ε = {epsilon} exceeds 0.1; modulation theory assumes ε ≪ 1"))
    }
}
