//! Stiff time integration with step-doubling adaptivity and blow-up detection.

mod growth;
mod stepper;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use growth::{
    convexity, estimate_blowup_time, fit_growth, linear_fit, resample_log, slope_stderr,
    Convexity, GrowthFit,
};
pub use stepper::{Etdrk4Coeffs, Scheme, Stepper};

use crate::error::{Error, Result};
use crate::models::{Direction, SpectralModel};
use crate::spectral::{spectral_l2_sq, spectral_semi_h1_sq, Field, SpectralGrid};

/// Top-octave energy fraction above which a collapsed step is blamed on
/// missing resolution.
pub const TAIL_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub dt0: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default)]
    pub adapt: bool,
    #[serde(default = "default_tol")]
    pub tol_loc: f64,
    pub t_end: f64,
    /// L² norm above which the run is stopped; `None` means `1e6·|u₀|`.
    #[serde(default)]
    pub cap_norm: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Relative threshold of the round-off filter (modes with
    /// `|û_k| < filter·max|û|` are zeroed after every step).
    #[serde(default)]
    pub filter: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    /// Keep a state snapshot every this many recorded samples (0 = never).
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_scheme() -> Scheme {
    Scheme::Etdrk4
}
fn default_dt_min() -> f64 {
    1e-10
}
fn default_tol() -> f64 {
    1e-8
}
fn default_record_every() -> usize {
    1
}
fn default_max_steps() -> u64 {
    20_000_000
}

impl IntegratorConfig {
    pub fn fixed(dt: f64, t_end: f64) -> IntegratorConfig {
        IntegratorConfig {
            scheme: Scheme::Etdrk4,
            dt0: dt,
            dt_min: default_dt_min().min(dt),
            adapt: false,
            tol_loc: default_tol(),
            t_end,
            cap_norm: None,
            record_every: 1,
            filter: None,
            max_steps: default_max_steps(),
            checkpoint_every: 0,
        }
    }

    pub fn adaptive(dt0: f64, t_end: f64, tol: f64) -> IntegratorConfig {
        IntegratorConfig {
            adapt: true,
            tol_loc: tol,
            ..IntegratorConfig::fixed(dt0, t_end)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt_min > 0.0) {
            return bad(format!("dt_min = {} must be > 0", self.dt_min));
        }
        if !(self.dt0 >= self.dt_min) {
            return bad(format!("dt0 = {} must be ≥ dt_min", self.dt0));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if let Some(c) = self.cap_norm {
            if !(c > 0.0) {
                return bad(format!("cap_norm = {c} must be > 0"));
            }
        }
        if !(self.tol_loc > 1e-14 && self.tol_loc < 1e-2) {
            return bad(format!("tol_loc = {} must lie in (1e-14, 1e-2)", self.tol_loc));
        }
        if self.record_every == 0 {
            return bad("record_every must be ≥ 1".into());
        }
        if self.adapt && self.scheme == Scheme::ImexCnab2 {
            return bad("adaptive stepping requires etdrk4".into());
        }
        if let Some(f) = self.filter {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("filter = {f} must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Completed,
    Blowup {
        t_lower: f64,
        t_estimate: Option<f64>,
    },
    ResolutionExhausted {
        t: f64,
        reason: String,
    },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Completed => "completed",
            Verdict::Blowup { .. } => "blowup",
            Verdict::ResolutionExhausted { .. } => "resolution_exhausted",
        }
    }

    pub fn is_blowup(&self) -> bool {
        matches!(self, Verdict::Blowup { .. })
    }
}

/// One recorded diagnostics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub dt: f64,
    pub extra: Vec<f64>,
}

/// Model-specific columns appended to each recorded sample.
pub trait Probe {
    fn columns(&self) -> Vec<String>;
    fn sample(&mut self, t: f64, u: &Field) -> Vec<f64>;
}

pub struct NoProbe;

impl Probe for NoProbe {
    fn columns(&self) -> Vec<String> {
        Vec::new()
    }
    fn sample(&mut self, _: f64, _: &Field) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: IntegratorConfig,
    pub model: &'static str,
    pub direction: Direction,
    pub columns: Vec<String>,
    pub samples: Vec<Sample>,
    pub verdict: Verdict,
    pub final_state: Field,
    pub t_final: f64,
    pub accepted: u64,
    pub rejected: u64,
    /// `(t, |u|)` after every accepted step.
    pub history: Vec<(f64, f64)>,
    pub checkpoints: Vec<(f64, Field)>,
}

impl RunRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.l2).collect()
    }

    /// Values of a probe column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.samples.iter().map(|s| s.extra[i]).collect())
    }
}

/// Fraction of energy held by the top octave of retained modes.
pub fn tail_fraction(grid: &SpectralGrid, coeffs: &[Complex64]) -> f64 {
    let kc = grid.cutoff(0).min(if grid.dim() == 2 {
        grid.cutoff(1)
    } else {
        usize::MAX
    }) as f64;
    let mut total = 0.0;
    let mut top = 0.0;
    for (f, c) in coeffs.iter().enumerate() {
        let (a, b) = grid.modes(f);
        let j = ((a * a + b * b) as f64).sqrt();
        let e = c.norm_sqr();
        total += e;
        if j > kc / 2.0 {
            top += e;
        }
    }
    if total > 0.0 {
        top / total
    } else {
        0.0
    }
}

/// Zero every coefficient below `threshold·max|û|`.
pub fn krasny_filter(coeffs: &mut [Complex64], threshold: f64) {
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let cut = threshold * max;
    for c in coeffs.iter_mut() {
        if c.norm() < cut {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// One step of the configured scheme.
pub fn step(
    state: &Field,
    model: &dyn SpectralModel,
    cfg: &IntegratorConfig,
    dt: f64,
) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    model.check(state)?;
    let mut s = Stepper::new(model, cfg.scheme);
    let mut c = state.coeffs();
    model.grid().apply_mask(&mut c);
    let out = s.step(&c, dt);
    if !out.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NumericalOverflow { t: dt });
    }
    wrap(model, out, state.representation())
}

fn wrap(
    model: &dyn SpectralModel,
    coeffs: Vec<Complex64>,
    repr: crate::Representation,
) -> Result<Field> {
    let f = Field::from_spectral(model.grid(), model.kind(), coeffs)?;
    let f = if model.zero_mean() { f.with_zero_mean() } else { f };
    Ok(f.into_repr(repr))
}

fn coeff_norm(grid: &SpectralGrid, c: &[Complex64]) -> f64 {
    spectral_l2_sq(grid, c).sqrt()
}

fn is_finite(c: &[Complex64]) -> bool {
    c.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn integrate(u0: &Field, model: &dyn SpectralModel, cfg: &IntegratorConfig) -> Result<RunRecord> {
    integrate_with(u0, model, cfg, &mut NoProbe)
}

/// Run until `t_end`, blow-up or resolution exhaustion, recording diagnostics.
pub fn integrate_with(
    u0: &Field,
    model: &dyn SpectralModel,
    cfg: &IntegratorConfig,
    probe: &mut dyn Probe,
) -> Result<RunRecord> {
    cfg.validate()?;
    model.check(u0)?;
    let grid = model.grid().clone();
    let mut u = u0.coeffs();
    grid.apply_mask(&mut u);
    if model.zero_mean() {
        u[0] = Complex64::new(0.0, 0.0);
    }
    let n0 = coeff_norm(&grid, &u);
    let cap = cfg.cap_norm.unwrap_or(1e6 * n0.max(f64::MIN_POSITIVE));

    let mut stepper = Stepper::new(model, cfg.scheme);
    let mut rec = RunRecord {
        config: cfg.clone(),
        model: model.name(),
        direction: model.direction(),
        columns: probe.columns(),
        samples: Vec::new(),
        verdict: Verdict::Completed,
        final_state: u0.clone(),
        t_final: 0.0,
        accepted: 0,
        rejected: 0,
        history: vec![(0.0, n0)],
        checkpoints: Vec::new(),
    };

    let record = |rec: &mut RunRecord, probe: &mut dyn Probe, t: f64, c: &[Complex64], dt: f64| {
        let field = wrap(model, c.to_vec(), crate::Representation::Spectral).expect("grid-sized");
        let l2 = coeff_norm(&grid, c);
        let h1 = (l2 * l2 + spectral_semi_h1_sq(&grid, c)).sqrt();
        let extra = probe.sample(t, &field);
        rec.samples.push(Sample { t, l2, h1, dt, extra });
        if cfg.checkpoint_every > 0 && (rec.samples.len() - 1).is_multiple_of(cfg.checkpoint_every) {
            rec.checkpoints.push((t, field));
        }
    };
    record(&mut rec, probe, 0.0, &u, cfg.dt0);

    let mut t = 0.0;
    let mut dt = cfg.dt0;
    let fixed_steps = (cfg.t_end / cfg.dt0 - 1e-9).ceil().max(1.0) as u64;
    let mut cap_crossed = false;
    let mut dt_collapsed = false;
    let mut budget = false;
    let mut last_recorded = true;

    loop {
        if cfg.adapt {
            if cfg.t_end - t <= 1e-12 * cfg.t_end {
                break;
            }
        } else if rec.accepted >= fixed_steps {
            break;
        }
        if rec.accepted + rec.rejected >= cfg.max_steps {
            budget = true;
            break;
        }

        let (next, h) = if cfg.adapt {
            let h = dt.min(cfg.t_end - t);
            let full = stepper.step(&u, h);
            let half = stepper.step(&u, 0.5 * h);
            let two = stepper.step(&half, 0.5 * h);
            let scale = coeff_norm(&grid, &two).max(f64::MIN_POSITIVE);
            let diff: Vec<Complex64> = two.iter().zip(&full).map(|(a, b)| a - b).collect();
            let mut err = coeff_norm(&grid, &diff) / scale / 15.0;
            if !is_finite(&two) || !err.is_finite() {
                err = f64::INFINITY;
            }
            let factor = if err == 0.0 {
                2.0
            } else {
                (0.9 * (cfg.tol_loc / err).powf(0.2)).clamp(0.2, 2.0)
            };
            if err > cfg.tol_loc {
                rec.rejected += 1;
                dt = h * factor;
                if dt < cfg.dt_min {
                    dt_collapsed = true;
                    break;
                }
                continue;
            }
            if h == dt || factor < 1.0 {
                dt = h * factor;
            }
            (two, h)
        } else {
            let h = if rec.accepted + 1 == fixed_steps {
                cfg.t_end - rec.accepted as f64 * cfg.dt0
            } else {
                cfg.dt0
            };
            (stepper.step(&u, h), h)
        };

        let mut next = next;
        if let Some(thr) = cfg.filter {
            krasny_filter(&mut next, thr);
        }
        rec.accepted += 1;
        let t_new = if cfg.adapt {
            t + h
        } else if rec.accepted == fixed_steps {
            cfg.t_end
        } else {
            rec.accepted as f64 * cfg.dt0
        };
        let norm = coeff_norm(&grid, &next);
        if !norm.is_finite() || !is_finite(&next) {
            cap_crossed = true;
            break;
        }
        t = t_new;
        u = next;
        rec.history.push((t, norm));
        last_recorded = rec.accepted.is_multiple_of(cfg.record_every as u64);
        if last_recorded {
            record(&mut rec, probe, t, &u, h);
        }
        if norm > cap {
            cap_crossed = true;
            break;
        }
        if cfg.adapt && dt < cfg.dt_min {
            dt_collapsed = true;
            break;
        }
    }
    if !last_recorded {
        let h = rec.samples.last().map_or(cfg.dt0, |s| s.dt);
        record(&mut rec, probe, t, &u, h);
    }

    rec.t_final = t;
    rec.verdict = if budget {
        Verdict::ResolutionExhausted {
            t,
            reason: format!("step budget of {} exhausted", cfg.max_steps),
        }
    } else if cap_crossed || dt_collapsed {
        classify(&rec.history, tail_fraction(&grid, &u), cap, cap_crossed, t)
    } else {
        Verdict::Completed
    };
    rec.final_state = wrap(model, u, crate::Representation::Spectral)?;
    Ok(rec)
}

fn classify(history: &[(f64, f64)], tail: f64, cap: f64, cap_crossed: bool, t: f64) -> Verdict {
    let (ts, logs) = resample_log(history, 400);
    let convex = ts.len() >= 3 && convexity(&ts, &logs) == Convexity::Convex;
    let t_lower = history
        .iter()
        .rev()
        .find(|p| p.1 <= cap)
        .map_or(0.0, |p| p.0);
    let blowup = || {
        let est = estimate_blowup_time(history).map(|e| e.max(t_lower));
        Verdict::Blowup {
            t_lower,
            t_estimate: est,
        }
    };
    if cap_crossed {
        if convex {
            blowup()
        } else {
            Verdict::ResolutionExhausted {
                t,
                reason: "norm cap crossed without convex log-growth".into(),
            }
        }
    } else if tail > TAIL_LIMIT {
        Verdict::ResolutionExhausted {
            t,
            reason: format!("dt_min reached with top-octave energy fraction {tail:.3e}"),
        }
    } else if convex {
        blowup()
    } else {
        Verdict::ResolutionExhausted {
            t,
            reason: "dt_min reached without convex log-growth".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::models::{Cgl, Kbs, Linear};
    use crate::ScalarKind;

    fn grid(n: usize, l: f64) -> Arc<SpectralGrid> {
        Arc::new(SpectralGrid::new_1d(n, l).unwrap())
    }

    #[test]
    fn config_validation() {
        let mut c = IntegratorConfig::fixed(0.1, 1.0);
        assert!(c.validate().is_ok());
        c.tol_loc = 0.5;
        assert!(c.validate().is_err());
        let mut c = IntegratorConfig::adaptive(0.1, 1.0, 1e-6);
        c.scheme = Scheme::ImexCnab2;
        assert!(c.validate().is_err());
        let mut c = IntegratorConfig::fixed(0.1, 1.0);
        c.cap_norm = Some(0.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn heat_decay_matches_exponential() {
        let l = 2.0 * PI;
        let g = grid(32, l);
        let m = Kbs::new(&g, 1.0, 0.0, 0.0).unwrap();
        let u0 = Field::from_fn(&g, |x| 1e-6 * x.sin()).with_zero_mean();
        let cfg = IntegratorConfig::fixed(0.01, 2.0);
        let r = integrate(&u0, &m, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Completed);
        let last = r.samples.last().unwrap();
        assert_eq!(last.t, 2.0);
        let expect = (-2.0f64).exp() * u0.l2_norm();
        assert!((last.l2 - expect).abs() < 1e-8 * expect);
    }

    fn smooth_kbs() -> (Kbs, Field) {
        let g = grid(64, 2.0 * PI);
        let m = Kbs::new(&g, 0.1, 0.2, 1.0).unwrap();
        let u0 = Field::from_fn(&g, |x| x.sin() + 0.5 * (2.0 * x).cos()).with_zero_mean();
        (m, u0)
    }

    #[test]
    fn etdrk4_is_fourth_order() {
        let (m, u0) = smooth_kbs();
        let run = |dt: f64| {
            integrate(&u0, &m, &IntegratorConfig::fixed(dt, 1.0))
                .unwrap()
                .final_state
        };
        let reference = run(1e-3 / 4.0);
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| run(dt).sub(&reference).unwrap().l2_norm())
            .collect();
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!(o1 > 3.8 && o2 > 3.8, "orders {o1} {o2}");
    }

    #[test]
    fn cnab2_is_second_order() {
        let (m, u0) = smooth_kbs();
        let run = |dt: f64| {
            let mut c = IntegratorConfig::fixed(dt, 0.5);
            c.scheme = Scheme::ImexCnab2;
            integrate(&u0, &m, &c).unwrap().final_state
        };
        let reference = integrate(&u0, &m, &IntegratorConfig::fixed(1e-4, 0.5))
            .unwrap()
            .final_state;
        let e1 = run(2e-3).sub(&reference).unwrap().l2_norm();
        let e2 = run(1e-3).sub(&reference).unwrap().l2_norm();
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn adaptive_matches_fixed() {
        let (m, u0) = smooth_kbs();
        let a = integrate(&u0, &m, &IntegratorConfig::adaptive(0.1, 1.0, 1e-10)).unwrap();
        let f = integrate(&u0, &m, &IntegratorConfig::fixed(1e-3, 1.0)).unwrap();
        assert_eq!(a.t_final, 1.0);
        let err = a.final_state.sub(&f.final_state).unwrap().l2_norm();
        assert!(err < 1e-7 * f.final_state.l2_norm(), "err {err}");
        assert!(a.accepted < 1000);
    }

    #[test]
    fn determinism() {
        let (m, u0) = smooth_kbs();
        let cfg = IntegratorConfig::adaptive(0.05, 2.0, 1e-9);
        let a = integrate(&u0, &m, &cfg).unwrap();
        let b = integrate(&u0, &m, &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn riccati_blowup_detected() {
        // uniform backward CGL: y' = 2δ... blows up like a Riccati solution
        let g = grid(16, 2.0 * PI);
        let m = Cgl::new(&g, 1.0, 0.0, 1.0, 1.0, 0.0)
            .unwrap()
            .with_direction(Direction::Backward);
        let u0 = Field::from_fn_complex(&g, |_| Complex64::new(2.0f64.sqrt(), 0.0));
        let mut cfg = IntegratorConfig::adaptive(1e-3, 5.0, 1e-9);
        cfg.cap_norm = Some(1e4);
        let r = integrate(&u0, &m, &cfg).unwrap();
        // y' = −2δy + 2αy²/L·L... uniform: y = |u|², dy/ds = −2y + 2y² (pointwise)
        let s1 = 0.5 * (2.0f64).ln();
        match r.verdict {
            Verdict::Blowup { t_lower, t_estimate } => {
                assert!(t_lower < s1);
                let est = t_estimate.unwrap();
                assert!((est - s1).abs() < 1e-3, "estimate {est} vs {s1}");
            }
            v => panic!("unexpected verdict {v:?}"),
        }
    }

    #[test]
    fn cap_monotonicity() {
        let g = grid(16, 2.0 * PI);
        let m = Cgl::new(&g, 1.0, 0.0, 1.0, 1.0, 0.0)
            .unwrap()
            .with_direction(Direction::Backward);
        let u0 = Field::from_fn_complex(&g, |_| Complex64::new(2.0f64.sqrt(), 0.0));
        let mut last = 0.0;
        for cap in [1e2, 1e3, 1e4] {
            let mut cfg = IntegratorConfig::adaptive(1e-3, 5.0, 1e-9);
            cfg.cap_norm = Some(cap);
            match integrate(&u0, &m, &cfg).unwrap().verdict {
                Verdict::Blowup { t_lower, .. } => {
                    assert!(t_lower >= last);
                    last = t_lower;
                }
                v => panic!("unexpected verdict {v:?}"),
            }
        }
    }

    #[test]
    fn pure_exponential_growth_is_not_blowup() {
        let g = grid(16, 2.0 * PI);
        let m = Linear::new(&g, ScalarKind::Complex, |_| Complex64::new(1.0, 0.0));
        let u0 = Field::from_fn_complex(&g, |_| Complex64::new(1.0, 0.0));
        let mut cfg = IntegratorConfig::fixed(0.01, 100.0);
        cfg.cap_norm = Some(1e3);
        let r = integrate(&u0, &m, &cfg).unwrap();
        assert_eq!(r.verdict.label(), "resolution_exhausted");
    }

    #[test]
    fn tail_fraction_of_low_mode_is_zero() {
        let g = grid(64, 2.0 * PI);
        let u = Field::from_fn(&g, f64::sin);
        assert!(tail_fraction(&g, &u.coeffs()) < 1e-25);
        let v = Field::from_fn(&g, |x| (20.0 * x).sin());
        assert!(tail_fraction(&g, &v.coeffs()) > 0.99);
    }

    #[test]
    fn single_step_api() {
        let g = grid(32, 2.0 * PI);
        let m = Linear::new(&g, ScalarKind::Complex, |k| Complex64::new(-k * k, 0.0));
        let u = Field::from_fn_complex(&g, |x| Complex64::from_polar(1.0, x));
        let v = step(&u, &m, &IntegratorConfig::fixed(0.1, 1.0), 0.1).unwrap();
        let expect = u.scale((-0.1f64).exp());
        assert!(v.sub(&expect).unwrap().l2_norm() < 1e-12);
        assert!(step(&u, &m, &IntegratorConfig::fixed(0.1, 1.0), 0.0).is_err());
    }
}
