use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convexity {
    Convex,
    Flat,
    Concave,
}

/// Exponential fit `|u(t)| ≈ C e^{pt}` over a window.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GrowthFit {
    pub window: (f64, f64),
    pub exponent: f64,
    pub intercept: f64,
    pub convexity: Convexity,
    /// RMS residual of the fit on `log|u|`.
    pub residual: f64,
}

/// Ordinary least squares `y ≈ a + b t`; returns `(a, b, rms residual)`.
pub fn linear_fit(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (a, b) in t.iter().zip(y) {
        stt += (a - mt) * (a - mt);
        sty += (a - mt) * (b - my);
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let icpt = my - slope * mt;
    let res = (t
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (icpt, slope, res)
}

/// Standard error of the slope of [`linear_fit`].
pub fn slope_stderr(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len();
    if n < 3 {
        return f64::INFINITY;
    }
    let (a, b, _) = linear_fit(t, y);
    let mt = t.iter().sum::<f64>() / n as f64;
    let stt: f64 = t.iter().map(|x| (x - mt).powi(2)).sum();
    let sse: f64 = t.iter().zip(y).map(|(x, v)| (v - a - b * x).powi(2)).sum();
    (sse / (n as f64 - 2.0) / stt).sqrt()
}

/// Majority sign of the second divided differences of `y(t)`.
pub fn convexity(t: &[f64], y: &[f64]) -> Convexity {
    let n = t.len();
    if n < 3 {
        return Convexity::Flat;
    }
    let d1: Vec<f64> = (0..n - 1)
        .map(|i| (y[i + 1] - y[i]) / (t[i + 1] - t[i]))
        .collect();
    let (mut pos, mut neg, mut zero) = (0usize, 0usize, 0usize);
    for i in 1..n - 1 {
        let h = 0.5 * (t[i + 1] - t[i - 1]);
        let d2 = (d1[i] - d1[i - 1]) / h;
        let tol = 1e-6 * (d1[i].abs() + d1[i - 1].abs()).max(1e-300) / h;
        if d2 > tol {
            pos += 1;
        } else if d2 < -tol {
            neg += 1;
        } else {
            zero += 1;
        }
    }
    if pos > neg && pos > zero {
        Convexity::Convex
    } else if neg > pos && neg > zero {
        Convexity::Concave
    } else {
        Convexity::Flat
    }
}

/// `(t, log|u|)` at the history points first reaching each of `n` uniform
/// times, so that long stretches of tiny steps do not dominate.
pub fn resample_log(history: &[(f64, f64)], n: usize) -> (Vec<f64>, Vec<f64>) {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .filter(|p| p.1 > 0.0 && p.1.is_finite())
        .map(|p| (p.0, p.1.ln()))
        .collect();
    if pts.len() < 2 || n < 2 {
        return pts.into_iter().unzip();
    }
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let target = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
        while j + 1 < pts.len() && pts[j].0 < target {
            j += 1;
        }
        if out.last().is_none_or(|p| p.0 < pts[j].0) {
            out.push(pts[j]);
        }
    }
    out.into_iter().unzip()
}

/// Least-squares growth exponent on `log|u|`.
pub fn fit_growth(t: &[f64], norm: &[f64]) -> Result<GrowthFit> {
    if t.len() != norm.len() {
        return Err(Error::InvalidParameter("series lengths differ".into()));
    }
    if t.len() < 20 {
        return Err(Error::InvalidParameter(format!(
            "need at least 20 samples, got {}",
            t.len()
        )));
    }
    if let Some(v) = norm.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!("non-positive norm {v}")));
    }
    let logs: Vec<f64> = norm.iter().map(|v| v.ln()).collect();
    let (a, b, res) = linear_fit(t, &logs);
    Ok(GrowthFit {
        window: (t[0], t[t.len() - 1]),
        exponent: b,
        intercept: a,
        convexity: convexity(t, &logs),
        residual: res,
    })
}

/// Extrapolated singular time from a norm history approaching a power-law
/// singularity `|u| ~ (T − t)^{−q}`.
///
/// `1/(d log|u|/dt)` is linear in `t` with root `T`. On a finite grid the
/// rate eventually saturates at the fastest resolved linear rate, so the fit
/// uses the samples whose rate lies between 1/64 and 1/4 of the final rate.
pub fn estimate_blowup_time(history: &[(f64, f64)]) -> Option<f64> {
    let mut rates = Vec::new();
    for p in history.windows(2) {
        let (t0, y0) = p[0];
        let (t1, y1) = p[1];
        if !(y0 > 0.0 && y1 > 0.0 && t1 > t0) {
            continue;
        }
        let g = (y1.ln() - y0.ln()) / (t1 - t0);
        if g.is_finite() {
            rates.push((0.5 * (t0 + t1), g));
        }
    }
    let g_last = rates.last()?.1;
    if !(g_last > 0.0) {
        return None;
    }
    let (ts, zs): (Vec<f64>, Vec<f64>) = rates
        .iter()
        .filter(|(_, g)| *g >= g_last / 64.0 && *g <= g_last / 4.0)
        .map(|(t, g)| (*t, 1.0 / g))
        .unzip();
    if ts.len() < 3 {
        return None;
    }
    let (a, b, _) = linear_fit(&ts, &zs);
    if b < 0.0 {
        let root = -a / b;
        root.is_finite().then_some(root)
    } else {
        None
    }
}
