//! Scalar numerical utilities: adaptive quadrature, RK4, golden-section search,
//! polynomial least squares.

use nalgebra::{DMatrix, DVector};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` on `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let mut comp = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        let width = (hi - lo) / (b - a);
        if err <= (tol * width).max(1e-300) || depth >= 50 || err <= 1e-15 * v.abs() {
            let y = v - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// Classical RK4 for `y' = f(t, y)` with `n` uniform steps; returns the trajectory.
pub fn rk4(
    f: impl Fn(f64, f64) -> f64,
    y0: f64,
    t0: f64,
    t1: f64,
    n: usize,
) -> Vec<(f64, f64)> {
    let h = (t1 - t0) / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut y = y0;
    out.push((t0, y));
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push((t0 + (i + 1) as f64 * h, y));
    }
    out
}

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Least-squares polynomial of degree `deg`: coefficients in increasing
/// order and their standard errors. `None` when there are too few points or
/// the design matrix is singular.
pub fn polyfit(x: &[f64], y: &[f64], deg: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = x.len().min(y.len());
    let p = deg + 1;
    if n <= p {
        return None;
    }
    // centre and scale the abscissa for conditioning
    let x0 = x[..n].iter().sum::<f64>() / n as f64;
    let sx = x[..n].iter().map(|v| (v - x0).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(n, p, |i, j| ((x[i] - x0) / sx).powi(j as i32));
    let b = DVector::from_column_slice(&y[..n]);
    let ata = a.transpose() * &a;
    let inv = ata.clone().try_inverse()?;
    let c = &inv * (a.transpose() * &b);
    let r = &b - &a * &c;
    let s2 = r.norm_squared() / (n - p) as f64;
    // back to the unscaled, uncentred basis: y = Σ c_j ((x − x0)/sx)^j
    let mut t = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut binom = 1.0;
        for k in 0..=j {
            t[(k, j)] = binom * (-x0).powi((j - k) as i32) / sx.powi(j as i32);
            binom *= (j - k) as f64 / (k + 1) as f64;
        }
    }
    let coef = &t * &c;
    let cov = &t * (inv * s2) * t.transpose();
    let err = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    Some((coef.iter().copied().collect(), err))
}
