use std::f64::consts::PI;

use num_complex::Complex64;

use crate::models::SpectralModel;
use crate::spectral::symmetrize;
use crate::ScalarKind;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const CONTOUR_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Etdrk4,
    ImexCnab2,
}

/// Per-mode ETDRK4 coefficients for a fixed step.
#[derive(Debug, Clone)]
pub struct Etdrk4Coeffs {
    pub dt: f64,
    pub e: Vec<Complex64>,
    pub e2: Vec<Complex64>,
    pub q: Vec<Complex64>,
    pub f1: Vec<Complex64>,
    pub f2: Vec<Complex64>,
    pub f3: Vec<Complex64>,
}

impl Etdrk4Coeffs {
    /// φ-function coefficients by contour averaging on a unit circle around
    /// each `σ(k)·dt`. Modes outside the dealiasing mask get zero coefficients.
    pub fn new(model: &dyn SpectralModel, dt: f64) -> Etdrk4Coeffs {
        let grid = model.grid();
        let len = grid.len();
        let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, PI * (2.0 * j as f64 + 1.0) / CONTOUR_POINTS as f64))
            .collect();
        let mut c = Etdrk4Coeffs {
            dt,
            e: vec![ZERO; len],
            e2: vec![ZERO; len],
            q: vec![ZERO; len],
            f1: vec![ZERO; len],
            f2: vec![ZERO; len],
            f3: vec![ZERO; len],
        };
        let m = CONTOUR_POINTS as f64;
        for f in 0..len {
            if !grid.keeps(f) {
                continue;
            }
            let l = model.symbol(f) * dt;
            c.e[f] = l.exp();
            c.e2[f] = (l * 0.5).exp();
            let (mut q, mut f1, mut f2, mut f3) = (ZERO, ZERO, ZERO, ZERO);
            for &z in &roots {
                let r = l + z;
                let er = r.exp();
                let r2 = r * r;
                let r3 = r2 * r;
                q += ((r * 0.5).exp() - 1.0) / r;
                f1 += (-4.0 - r + er * (4.0 - 3.0 * r + r2)) / r3;
                f2 += (2.0 + r + er * (r - 2.0)) / r3;
                f3 += (-4.0 - 3.0 * r - r2 + er * (4.0 - r)) / r3;
            }
            if model.symbol(f).im == 0.0 {
                q.im = 0.0;
                f1.im = 0.0;
                f2.im = 0.0;
                f3.im = 0.0;
            }
            c.q[f] = q * (dt / m);
            c.f1[f] = f1 * (dt / m);
            c.f2[f] = f2 * (dt / m);
            c.f3[f] = f3 * (dt / m);
        }
        c
    }

    pub fn is_finite(&self) -> bool {
        [&self.e, &self.e2, &self.q, &self.f1, &self.f2, &self.f3]
            .iter()
            .all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

/// Owns scheme state (coefficient cache, multistep history) for one model.
pub struct Stepper<'a> {
    model: &'a dyn SpectralModel,
    scheme: Scheme,
    cache: Vec<Etdrk4Coeffs>,
    previous: Option<(f64, Vec<Complex64>)>,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a dyn SpectralModel, scheme: Scheme) -> Stepper<'a> {
        Stepper {
            model,
            scheme,
            cache: Vec::new(),
            previous: None,
        }
    }

    pub fn model(&self) -> &'a dyn SpectralModel {
        self.model
    }

    /// Forget multistep history (next CNAB2 step restarts with CN–Euler).
    pub fn reset(&mut self) {
        self.previous = None;
    }

    fn coeffs(&mut self, dt: f64) -> &Etdrk4Coeffs {
        if let Some(i) = self.cache.iter().position(|c| c.dt == dt) {
            return &self.cache[i];
        }
        if self.cache.len() >= 4 {
            self.cache.remove(0);
        }
        self.cache.push(Etdrk4Coeffs::new(self.model, dt));
        self.cache.last().unwrap()
    }

    /// Advance coefficients by `dt`.
    pub fn step(&mut self, u: &[Complex64], dt: f64) -> Vec<Complex64> {
        let mut out = match self.scheme {
            Scheme::Etdrk4 => self.etdrk4(u, dt),
            Scheme::ImexCnab2 => self.cnab2(u, dt),
        };
        self.finish(&mut out);
        out
    }

    fn finish(&self, u: &mut [Complex64]) {
        let grid = self.model.grid();
        grid.apply_mask(u);
        if self.model.zero_mean() {
            u[0] = ZERO;
        }
        if self.model.kind() == ScalarKind::Real {
            symmetrize(grid, u);
        }
    }

    fn etdrk4(&mut self, u: &[Complex64], dt: f64) -> Vec<Complex64> {
        let model = self.model;
        let c = self.coeffs(dt).clone();
        let len = u.len();
        let nu = model.nonlinear(u);
        let mut a = vec![ZERO; len];
        for f in 0..len {
            a[f] = c.e2[f] * u[f] + c.q[f] * nu[f];
        }
        let na = model.nonlinear(&a);
        let mut b = vec![ZERO; len];
        for f in 0..len {
            b[f] = c.e2[f] * u[f] + c.q[f] * na[f];
        }
        let nb = model.nonlinear(&b);
        let mut cc = vec![ZERO; len];
        for f in 0..len {
            cc[f] = c.e2[f] * a[f] + c.q[f] * (2.0 * nb[f] - nu[f]);
        }
        let nc = model.nonlinear(&cc);
        (0..len)
            .map(|f| {
                c.e[f] * u[f]
                    + c.f1[f] * nu[f]
                    + 2.0 * c.f2[f] * (na[f] + nb[f])
                    + c.f3[f] * nc[f]
            })
            .collect()
    }

    fn cnab2(&mut self, u: &[Complex64], dt: f64) -> Vec<Complex64> {
        let model = self.model;
        let grid = model.grid();
        let n0 = model.nonlinear(u);
        let prev = match &self.previous {
            Some((h, p)) if *h == dt => p.clone(),
            _ => n0.clone(),
        };
        let out = (0..u.len())
            .map(|f| {
                if !grid.keeps(f) {
                    return ZERO;
                }
                let s = model.symbol(f) * (0.5 * dt);
                ((1.0 + s) * u[f] + dt * (1.5 * n0[f] - 0.5 * prev[f])) / (1.0 - s)
            })
            .collect();
        self.previous = Some((dt, n0));
        out
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::models::Linear;
    use crate::spectral::{storage_index, Field, SpectralGrid};

    fn phi_oracle(z: Complex64) -> [Complex64; 4] {
        // series for small |z|, closed forms otherwise
        if z.norm() < 1.0 {
            let mut q = Complex64::new(0.0, 0.0);
            let mut f1 = q;
            let mut f2 = q;
            let mut f3 = q;
            // φ_k(z) = Σ z^n/(n+k)!
            let phi = |k: u32| {
                let mut s = Complex64::new(0.0, 0.0);
                let mut term = Complex64::new(1.0, 0.0);
                let mut fact = (1..=k as u64).product::<u64>() as f64;
                for n in 0..30u32 {
                    s += term / fact;
                    term *= z;
                    fact *= (n + k + 1) as f64;
                }
                s
            };
            let (p1, p2, p3) = (phi(1), phi(2), phi(3));
            q += 0.5 * {
                let zh = z * 0.5;
                let mut s = Complex64::new(0.0, 0.0);
                let mut term = Complex64::new(1.0, 0.0);
                let mut fact = 1.0;
                for n in 0..30u32 {
                    s += term / fact;
                    term *= zh;
                    fact *= (n + 2) as f64;
                }
                s
            };
            f1 += p1 - 3.0 * p2 + 4.0 * p3;
            f2 += p2 - 2.0 * p3;
            f3 += -p2 + 4.0 * p3;
            [q, f1, f2, f3]
        } else {
            let e = z.exp();
            let z3 = z * z * z;
            [
                ((z * 0.5).exp() - 1.0) / z,
                (-4.0 - z + e * (4.0 - 3.0 * z + z * z)) / z3,
                (2.0 + z + e * (z - 2.0)) / z3,
                (-4.0 - 3.0 * z - z * z + e * (4.0 - z)) / z3,
            ]
        }
    }

    #[test]
    fn contour_coefficients_match_closed_forms() {
        let g = Arc::new(SpectralGrid::new_1d(64, 2.0 * PI).unwrap());
        let m = Linear::new(&g, ScalarKind::Complex, |k| Complex64::new(-k * k, 0.3 * k));
        let dt = 0.05;
        let c = Etdrk4Coeffs::new(&m, dt);
        for j in [0i64, 1, 3, 7, 15, 21] {
            let f = storage_index(j, 64);
            let z = m.symbol(f) * dt;
            let [q, f1, f2, f3] = phi_oracle(z);
            let scale = 1.0;
            assert!((c.q[f] / dt - q).norm() < 1e-13 * scale, "q at {j}");
            assert!((c.f1[f] / dt - f1).norm() < 1e-12 * scale, "f1 at {j}");
            assert!((c.f2[f] / dt - f2).norm() < 1e-12 * scale, "f2 at {j}");
            assert!((c.f3[f] / dt - f3).norm() < 1e-12 * scale, "f3 at {j}");
        }
        // masked modes are inert
        let top = storage_index(30, 64);
        assert_eq!(c.e[top], ZERO);
    }

    #[test]
    fn etdrk4_exact_on_linear() {
        let g = Arc::new(SpectralGrid::new_1d(32, 2.0 * PI).unwrap());
        let m = Linear::new(&g, ScalarKind::Complex, |k| Complex64::new(-k * k, 0.0));
        let u = Field::from_fn_complex(&g, |x| Complex64::from_polar(1.0, x));
        let mut s = Stepper::new(&m, Scheme::Etdrk4);
        let v = s.step(&u.coeffs(), 0.1);
        let expect = (-0.1f64).exp();
        assert!((v[1] - expect).norm() < 1e-15);
        assert!(v.iter().enumerate().all(|(f, z)| f == 1 || z.norm() < 1e-16));
    }

    #[test]
    fn cnab2_linear_is_crank_nicolson() {
        let g = Arc::new(SpectralGrid::new_1d(32, 2.0 * PI).unwrap());
        let m = Linear::new(&g, ScalarKind::Complex, |k| Complex64::new(-k * k, 0.0));
        let u = Field::from_fn_complex(&g, |x| Complex64::from_polar(1.0, 2.0 * x));
        let mut s = Stepper::new(&m, Scheme::ImexCnab2);
        let v = s.step(&u.coeffs(), 0.1);
        let expect = (1.0 - 0.2) / (1.0 + 0.2);
        assert!((v[2].re - expect).abs() < 1e-15);
    }
}
