//! The registered scenarios. Each one builds its model and initial state from
//! a [`ScenarioConfig`], integrates, and evaluates its checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use backlab_core::diagnostics::{self, BbmProbe, HyperNsProbe, NlsProbe};
use backlab_core::elliptic::{self, Modulation};
use backlab_core::gauge::{self, BumpFunction, GaugeFunction, InequalityParams, LyapunovProbe};
use backlab_core::integrator::{
    convexity, integrate_with, resample_log, Convexity, NoProbe, Probe, RunRecord,
};
use backlab_core::models::{Bbm, Cgl, HyperNs, Kbs, Nls};
use backlab_core::numerics;
use backlab_core::spectral::symmetrize;
use backlab_core::{
    compute_spectrum, Direction, Field, PerturbedKdvKind, ScalarKind, SpectralGrid,
    SpectralModel, Spectrum, Verdict,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{InitialKind, ScenarioConfig, ScenarioId};
use crate::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Check {
        Check { name: name.to_string(), passed, detail: detail.into() }
    }
}

/// Tabular time series; the first column is the trajectory index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    fn push_record(&mut self, run: usize, rec: &RunRecord) {
        if self.columns.is_empty() {
            self.columns = ["run", "t", "l2", "h1", "dt"].iter().map(|s| s.to_string()).collect();
            self.columns.extend(rec.columns.iter().cloned());
        }
        for s in &rec.samples {
            let mut row = vec![run as f64, s.t, s.l2, s.h1, s.dt];
            row.extend(&s.extra);
            self.rows.push(row);
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: ScenarioId,
    pub verdict: Verdict,
    pub series: Series,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub final_state: Option<Field>,
    pub checkpoints: Vec<(f64, Field)>,
    pub spectrum: Option<Spectrum>,
}

impl Outcome {
    fn new(scenario: ScenarioId) -> Outcome {
        Outcome {
            scenario,
            verdict: Verdict::Completed,
            series: Series::default(),
            checks: Vec::new(),
            metrics: BTreeMap::new(),
            final_state: None,
            checkpoints: Vec::new(),
            spectrum: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Record a finite metric; non-finite values are dropped.
    fn metric(&mut self, name: &str, v: f64) {
        if v.is_finite() {
            self.metrics.insert(name.to_string(), v);
        }
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    fn absorb(&mut self, run: usize, rec: RunRecord) {
        self.series.push_record(run, &rec);
        self.verdict = rec.verdict.clone();
        self.checkpoints.extend(rec.checkpoints);
        self.final_state = Some(rec.final_state);
    }
}

fn setup<T>(r: backlab_core::Result<T>) -> Result<T, LabError> {
    r.map_err(|e| LabError::Config(e.to_string()))
}

/// Model-specific probes concatenated into one.
pub struct ProbeChain(pub Vec<Box<dyn Probe>>);

impl Probe for ProbeChain {
    fn columns(&self) -> Vec<String> {
        self.0.iter().flat_map(|p| p.columns()).collect()
    }

    fn sample(&mut self, t: f64, u: &Field) -> Vec<f64> {
        self.0.iter_mut().flat_map(|p| p.sample(t, u)).collect()
    }
}

/// A probe from a closure.
pub struct FnProbe<F: FnMut(f64, &Field) -> Vec<f64>> {
    names: Vec<String>,
    f: F,
}

impl<F: FnMut(f64, &Field) -> Vec<f64>> FnProbe<F> {
    pub fn new(names: &[&str], f: F) -> Self {
        FnProbe { names: names.iter().map(|s| s.to_string()).collect(), f }
    }
}

impl<F: FnMut(f64, &Field) -> Vec<f64>> Probe for FnProbe<F> {
    fn columns(&self) -> Vec<String> {
        self.names.clone()
    }

    fn sample(&mut self, t: f64, u: &Field) -> Vec<f64> {
        (self.f)(t, u)
    }
}

pub fn grid_1d(cfg: &ScenarioConfig) -> Result<Arc<SpectralGrid>, LabError> {
    Ok(Arc::new(setup(SpectralGrid::new_1d(cfg.grid.n, cfg.grid.length))?))
}

pub fn grid_2d(cfg: &ScenarioConfig) -> Result<Arc<SpectralGrid>, LabError> {
    let g = &cfg.grid;
    Ok(Arc::new(setup(SpectralGrid::new_2d(
        g.n,
        g.length,
        g.n1.unwrap_or(g.n),
        g.length1.unwrap_or(g.length),
    ))?))
}

/// Random coefficients on `lo ≤ |m| ≤ hi`, normalized to L² norm `norm`.
pub fn random_field(
    grid: &Arc<SpectralGrid>,
    kind: ScalarKind,
    lo: f64,
    hi: f64,
    norm: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Field, LabError> {
    let mut c = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (f, v) in c.iter_mut().enumerate() {
        let (a, b) = grid.modes(f);
        let r = ((a * a + b * b) as f64).sqrt();
        let nyq = grid.is_nyquist(f, 0) || (grid.dim() == 2 && grid.is_nyquist(f, 1));
        if r >= lo && r <= hi && grid.keeps(f) && !nyq {
            *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    if kind == ScalarKind::Real {
        symmetrize(grid, &mut c);
    }
    let u = setup(Field::from_spectral(grid, kind, c))?;
    let n = u.l2_norm();
    if !(n > 0.0) {
        return Err(LabError::Config("initial band contains no modes".into()));
    }
    Ok(u.scale(norm / n))
}

/// The initial state described by `cfg.initial`.
pub fn initial_field(
    cfg: &ScenarioConfig,
    grid: &Arc<SpectralGrid>,
    kind: ScalarKind,
    amplitude: f64,
    seed: u64,
) -> Result<Field, LabError> {
    let ini = &cfg.initial;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.length(0);
    let u = match ini.kind {
        InitialKind::Random => {
            random_field(grid, kind, 1.0, ini.modes as f64, amplitude, &mut rng)?
        }
        InitialKind::Sine => {
            if grid.dim() != 1 {
                return Err(LabError::Config("sine initial data is one-dimensional".into()));
            }
            Field::from_fn(grid, |x| amplitude * (2.0 * PI * x / l).sin())
        }
        InitialKind::Cnoidal => {
            let m0 = cfg.required("m0", cfg.model.m0)?;
            setup(elliptic::make_cnoidal(m0, grid))?.1
        }
        InitialKind::Eigenflow => {
            if grid.dim() != 2 {
                return Err(LabError::Config("eigenflow initial data is two-dimensional".into()));
            }
            let j = ini.modes as f64;
            Field::from_fn_2d(grid, |x, _| amplitude * (2.0 * PI * j * x / l).cos())
        }
        InitialKind::Uniform => {
            let vol = grid.volume();
            let base = match kind {
                ScalarKind::Real => Field::from_fn(grid, |_| 1.0 / vol.sqrt()),
                ScalarKind::Complex => {
                    Field::from_fn_complex(grid, |_| Complex64::new(1.0 / vol.sqrt(), 0.0))
                }
            };
            let u = if ini.perturbation > 0.0 {
                let p = random_field(grid, kind, 1.0, ini.modes as f64, ini.perturbation, &mut rng)?;
                setup(base.add(&p))?
            } else {
                base
            };
            let n = u.l2_norm();
            u.scale(amplitude / n)
        }
    };
    Ok(match kind {
        ScalarKind::Real => u,
        ScalarKind::Complex => u.into_complex(),
    })
}

/// Real forcing from the configured modes.
pub fn forcing_field(cfg: &ScenarioConfig, grid: &Arc<SpectralGrid>) -> Result<Option<Field>, LabError> {
    if cfg.model.forcing.is_empty() {
        return Ok(None);
    }
    let l = grid.length(0);
    for m in &cfg.model.forcing {
        if m.mode == 0 || 3 * m.mode as usize >= grid.n(0) {
            return Err(LabError::Config(format!(
                "forcing mode {} outside the resolved band",
                m.mode
            )));
        }
    }
    let modes = cfg.model.forcing.clone();
    let f = Field::from_fn(grid, move |x| {
        modes
            .iter()
            .map(|m| {
                let a = 2.0 * PI * m.mode as f64 * x / l;
                m.cos * a.cos() + m.sin * a.sin()
            })
            .sum()
    });
    Ok(Some(f.with_zero_mean()))
}

fn integrate(
    u0: &Field,
    model: &dyn SpectralModel,
    cfg: &ScenarioConfig,
    probe: &mut dyn Probe,
) -> Result<RunRecord, LabError> {
    Ok(integrate_with(u0, model, &cfg.integrator, probe)?)
}

fn kbs(cfg: &ScenarioConfig, grid: &Arc<SpectralGrid>, direction: Direction) -> Result<Kbs, LabError> {
    let m = &cfg.model;
    let mut k = setup(Kbs::new(
        grid,
        m.nu.unwrap_or(0.0),
        m.beta.unwrap_or(0.0),
        m.gamma.unwrap_or(0.0),
    ))?
    .with_direction(direction);
    if let Some(f) = forcing_field(cfg, grid)? {
        k = setup(k.with_forcing(&f))?;
    }
    Ok(k)
}

/// Execute one scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    cfg.validate()?;
    match cfg.scenario {
        ScenarioId::KdvBackwardBounded => kdv_backward_bounded(cfg),
        ScenarioId::KbsBackwardBlowup => kbs_backward_blowup(cfg),
        ScenarioId::KbsForwardAbsorbing => kbs_forward_absorbing(cfg),
        ScenarioId::KbsLifespanSweep => kbs_lifespan_sweep(cfg),
        ScenarioId::NlsBackwardGrowth => nls_backward_growth(cfg),
        ScenarioId::CglBackwardRiccati => cgl_backward_riccati(cfg),
        ScenarioId::HypernsDecay => hyperns_decay(cfg),
        ScenarioId::HypernsEigenflow => hyperns_eigenflow(cfg),
        ScenarioId::CnoidalTravel => cnoidal_travel(cfg),
        ScenarioId::CnoidalEigen => cnoidal_eigen(cfg),
        ScenarioId::ModulationDamped => modulation(cfg, PerturbedKdvKind::Damped),
        ScenarioId::ModulationViscous => modulation(cfg, PerturbedKdvKind::Viscous),
        ScenarioId::ModulationBbm => modulation(cfg, PerturbedKdvKind::ViscousBbm),
        ScenarioId::SpectrumReport => spectrum_report(cfg),
    }
}

fn kdv_backward_bounded(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let beta = cfg.required("beta", cfg.model.beta)?;
    if !(beta > 0.0) {
        return Err(LabError::Config("model.beta must be positive".into()));
    }
    let grid = grid_1d(cfg)?;
    let model = kbs(cfg, &grid, Direction::Backward)?;
    let u0 = initial_field(cfg, &grid, ScalarKind::Real, cfg.initial.amplitude, cfg.seed)?;
    let rec = integrate(&u0, &model, cfg, &mut NoProbe)?;
    let rep = diagnostics::kdv_bound_check(&rec.times(), &rec.norms(), beta, model.forcing_norm())?;
    let mut out = Outcome::new(cfg.scenario);
    out.check(
        "completed",
        rec.verdict == Verdict::Completed,
        format!("verdict {}", rec.verdict.label()),
    );
    out.check(
        "energy_bound",
        rep.bound.holds(),
        format!(
            "{} of {} samples violate, worst excess {:.3e}",
            rep.bound.violations, rep.bound.samples, rep.bound.worst_excess
        ),
    );
    out.check(
        "terminal_ball",
        rep.terminal_sup <= 1.1 * rep.terminal_limit,
        format!("sup |u|² = {:.6e}, 1.1|f|²/β² = {:.6e}", rep.terminal_sup, 1.1 * rep.terminal_limit),
    );
    out.metric("terminal_sup", rep.terminal_sup);
    out.metric("terminal_limit", rep.terminal_limit);
    out.metric("worst_excess", rep.bound.worst_excess);
    out.absorb(0, rec);
    Ok(out)
}

/// Convexity of `log|u|` over the accepted-step history.
pub fn log_convexity(rec: &RunRecord) -> Convexity {
    let (t, y) = resample_log(&rec.history, 400);
    convexity(&t, &y)
}

/// `T*` estimate of a blow-up verdict, falling back to the last resolved time.
pub fn lifespan(v: &Verdict) -> Option<f64> {
    match v {
        Verdict::Blowup { t_lower, t_estimate } => Some(t_estimate.unwrap_or(*t_lower)),
        _ => None,
    }
}

fn kbs_backward_blowup(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let grid = grid_1d(cfg)?;
    let model = kbs(cfg, &grid, Direction::Backward)?;
    let u0 = initial_field(cfg, &grid, ScalarKind::Real, cfg.initial.amplitude, cfg.seed)?;
    let rec = integrate(&u0, &model, cfg, &mut NoProbe)?;
    let mut out = Outcome::new(cfg.scenario);
    let conv = log_convexity(&rec);
    out.check("blowup", rec.verdict.is_blowup(), format!("verdict {:?}", rec.verdict));
    out.check("log_convex", conv == Convexity::Convex, format!("log|u| is {conv:?}"));
    if let Verdict::Blowup { t_lower, t_estimate } = &rec.verdict {
        out.metric("t_lower", *t_lower);
        if let Some(t) = t_estimate {
            out.metric("t_estimate", *t);
        }
    }
    out.metric("accepted_steps", rec.accepted as f64);
    out.absorb(0, rec);
    Ok(out)
}

/// Largest `|u|` over the second half of a run.
pub fn terminal_radius(rec: &RunRecord) -> f64 {
    let half = 0.5 * rec.t_final;
    rec.samples.iter().filter(|s| s.t >= half).map(|s| s.l2).fold(0.0, f64::max)
}

/// Gauge width: explicit, or the fixed point of `ε = ν/(2α c₀(ε) L)`.
pub fn coupled_epsilon(
    grid: &Arc<SpectralGrid>,
    nu: f64,
    alpha: f64,
    explicit: Option<f64>,
) -> Result<f64, LabError> {
    if let Some(e) = explicit {
        return Ok(e);
    }
    let l = grid.length(0);
    let mut eps = l / 8.0;
    for _ in 0..8 {
        let bump = setup(BumpFunction::new(eps, grid))?;
        let c0 = setup(gauge::empirical_c0(&bump, 100, 0))?;
        let next = gauge::gauge_epsilon(nu, alpha, c0, l);
        let done = (next - eps).abs() < 1e-3 * eps;
        eps = next;
        if done {
            break;
        }
    }
    setup(BumpFunction::new(eps, grid)).map(|_| eps)
}

fn kbs_forward_absorbing(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let grid = grid_1d(cfg)?;
    let model = kbs(cfg, &grid, Direction::Forward)?;
    let gauge_fn = match &cfg.gauge {
        Some(g) => {
            let nu = cfg.required("nu", cfg.model.nu)?;
            let eps = coupled_epsilon(&grid, nu, g.alpha, g.epsilon)?;
            let bump = setup(BumpFunction::new(eps, &grid))?;
            Some(setup(GaugeFunction::new(g.alpha, &bump))?)
        }
        None => None,
    };
    let amps = if cfg.initial.amplitudes.is_empty() {
        vec![cfg.initial.amplitude]
    } else {
        cfg.initial.amplitudes.clone()
    };
    let mut out = Outcome::new(cfg.scenario);
    let mut radii = Vec::new();
    let mut records = Vec::new();
    let mut fractions = Vec::new();
    for (i, a) in amps.iter().enumerate() {
        let u0 = initial_field(cfg, &grid, ScalarKind::Real, *a, cfg.seed + i as u64)?;
        let rec = match &gauge_fn {
            Some(gf) => {
                let mut probe = LyapunovProbe::new(gf.clone());
                let rec = integrate(&u0, &model, cfg, &mut probe)?;
                let params = InequalityParams {
                    nu: model.nu,
                    beta: model.beta,
                    gamma: model.gamma,
                    alpha: gf.alpha,
                    length: grid.length(0),
                    forcing_sq: model.forcing().map_or(0.0, |f| gauge::inverse_sqrt_laplacian_sq(&f)),
                };
                let rep = setup(gauge::inequality_from_series(
                    &rec.times(),
                    &rec.column("F").unwrap_or_default(),
                    &rec.column("xi_star").unwrap_or_default(),
                    &rec.norms(),
                    &params,
                ))?;
                fractions.push(rep.satisfied_fraction);
                rec
            }
            None => integrate(&u0, &model, cfg, &mut NoProbe)?,
        };
        radii.push(terminal_radius(&rec));
        records.push(rec);
    }
    out.check(
        "completed",
        records.iter().all(|r| r.verdict == Verdict::Completed),
        format!("{} trajectories", records.len()),
    );
    let radius = radii.iter().copied().fold(0.0, f64::max);
    out.metric("terminal_radius", radius);
    if records.len() >= 2 {
        // calibrate the ball on the first half, validate on the rest
        let split = records.len() / 2;
        let ball = 1.1 * radii[..split].iter().copied().fold(0.0, f64::max);
        let mut worst_entry: f64 = 0.0;
        let mut all_enter = true;
        for rec in &records[split..] {
            match entry_time(rec, ball) {
                Some(t) => worst_entry = worst_entry.max(t / rec.t_final),
                None => all_enter = false,
            }
        }
        out.metric("ball_radius", ball);
        out.metric("latest_entry_fraction", worst_entry);
        out.check(
            "common_ball",
            all_enter && worst_entry <= 0.75,
            format!(
                "ball R = {ball:.4e} from {split} calibration runs; latest entry at {:.1}% of the horizon",
                100.0 * worst_entry
            ),
        );
    }
    if !fractions.is_empty() {
        let worst = fractions.iter().copied().fold(1.0, f64::min);
        out.metric("inequality_fraction", worst);
        out.check(
            "lyapunov_inequality",
            worst >= 0.99,
            format!("worst satisfied fraction {worst:.4}"),
        );
    }
    for (i, rec) in records.into_iter().enumerate() {
        out.absorb(i, rec);
    }
    Ok(out)
}

/// First sample time after which the trajectory stays within `radius`.
pub fn entry_time(rec: &RunRecord, radius: f64) -> Option<f64> {
    let last_out = rec.samples.iter().rposition(|s| s.l2 > radius);
    match last_out {
        None => Some(0.0),
        Some(i) if i + 1 < rec.samples.len() => Some(rec.samples[i + 1].t),
        Some(_) => None,
    }
}

fn kbs_lifespan_sweep(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let grid = grid_1d(cfg)?;
    let model = kbs(cfg, &grid, Direction::Backward)?;
    if cfg.initial.amplitudes.len() < 2 {
        return Err(LabError::Config("initial.amplitudes needs at least two values".into()));
    }
    let mut out = Outcome::new(cfg.scenario);
    let mut spans = Vec::new();
    let mut records = Vec::new();
    // the same profile at every amplitude
    let shape = initial_field(cfg, &grid, ScalarKind::Real, 1.0, cfg.seed)?;
    for a in &cfg.initial.amplitudes {
        let rec = integrate(&shape.scale(*a), &model, cfg, &mut NoProbe)?;
        let t = lifespan(&rec.verdict);
        out.metric(&format!("lifespan_{a}"), t.unwrap_or(f64::NAN));
        spans.push(t);
        records.push(rec);
    }
    let all = spans.iter().all(Option::is_some);
    let t: Vec<f64> = spans.iter().map(|s| s.unwrap_or(f64::NAN)).collect();
    let decreasing = all && t.windows(2).all(|w| w[1] < w[0]);
    out.check(
        "lifespan_decreasing",
        decreasing,
        format!("amplitudes {:?} → lifespans {:?}", cfg.initial.amplitudes, t),
    );
    if all {
        if let Ok((slope, err)) = diagnostics::loglog_slope(&cfg.initial.amplitudes, &t) {
            out.metric("lifespan_slope", slope);
            out.metric("lifespan_slope_err", err);
        }
    }
    for (i, rec) in records.into_iter().enumerate() {
        out.absorb(i, rec);
    }
    Ok(out)
}

fn nls_backward_growth(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let lambda = cfg.required("lambda", cfg.model.lambda)?;
    let grid = grid_1d(cfg)?;
    let forcing = forcing_field(cfg, &grid)?.map(Field::into_complex);
    let mut model = setup(Nls::new(&grid, lambda))?.with_direction(Direction::Backward);
    if let Some(f) = &forcing {
        model = setup(model.with_forcing(f))?;
    }
    let u0 = initial_field(cfg, &grid, ScalarKind::Complex, cfg.initial.amplitude, cfg.seed)?;
    let mut probe = NlsProbe::new(forcing);
    let rec = integrate(&u0, &model, cfg, &mut probe)?;
    let s = rec.times();
    let l2 = rec.norms();
    let h1: Vec<f64> = rec.samples.iter().map(|x| x.h1).collect();
    let fnorm = model.forcing_norm();
    let b = diagnostics::nls_bounds_check(&s, &l2, lambda, fnorm)?;
    let e = diagnostics::nls_energy_bound_check(
        &s,
        &rec.column("phi").unwrap_or_default(),
        &rec.column("E").unwrap_or_default(),
        &h1,
        lambda,
        grid.length(0),
        fnorm,
    )?;
    let mut out = Outcome::new(cfg.scenario);
    out.check("completed", rec.verdict == Verdict::Completed, rec.verdict.label());
    out.check(
        "two_sided_bounds",
        b.upper.holds() && b.lower.holds(),
        format!(
            "upper violations {}, lower violations {} of {}",
            b.upper.violations, b.lower.violations, b.upper.samples
        ),
    );
    out.check(
        "growth_exponent",
        b.exponent >= b.band.0 && b.exponent <= b.band.1,
        format!("p = {:.5} in [{:.4}, {:.4}]", b.exponent, b.band.0, b.band.1),
    );
    out.check(
        "energy_exponents",
        e.passed(),
        format!(
            "E exponent {:?} ≤ {:.4}, H¹ exponent {:.5} ≤ {:.4}, φ bound violations {}",
            e.energy_exponent, e.energy_limit, e.h1_exponent, e.h1_limit, e.phi_bound.violations
        ),
    );
    out.metric("exponent", b.exponent);
    out.metric("h1_exponent", e.h1_exponent);
    if let Some(p) = e.energy_exponent {
        out.metric("energy_exponent", p);
    }
    out.absorb(0, rec);
    Ok(out)
}

fn cgl_backward_riccati(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let m = &cfg.model;
    let a = cfg.required("a", m.a)?;
    let delta = cfg.required("delta", m.delta)?;
    let alpha = cfg.required("alpha_cgl", m.alpha_cgl)?;
    let grid = grid_1d(cfg)?;
    let model = setup(Cgl::new(&grid, a, m.b.unwrap_or(0.0), delta, alpha, m.beta_cgl.unwrap_or(0.0)))?
        .with_direction(Direction::Backward);
    let u0 = initial_field(cfg, &grid, ScalarKind::Complex, cfg.initial.amplitude, cfg.seed)?;
    let rec = integrate(&u0, &model, cfg, &mut NoProbe)?;
    let y: Vec<f64> = rec.norms().iter().map(|v| v * v).collect();
    let rep = diagnostics::cgl_riccati_check(&rec.times(), &y, delta, alpha, grid.length(0), &rec.verdict)?;
    let mut out = Outcome::new(cfg.scenario);
    out.check(
        "riccati_domination",
        rep.domination.holds(),
        format!(
            "{} of {} samples below the comparison solution",
            rep.domination.violations, rep.domination.samples
        ),
    );
    out.check("blowup", rec.verdict.is_blowup(), format!("verdict {:?}", rec.verdict));
    let timely = matches!((rep.t_star, rep.s1), (Some(t), Some(s1)) if t <= 1.1 * s1);
    out.check(
        "blowup_time",
        timely,
        format!("T* = {:?}, closed-form s₁ = {:?}", rep.t_star, rep.s1),
    );
    if let Some(s1) = rep.s1 {
        out.metric("s1", s1);
    }
    if let Some(t) = rep.t_star {
        out.metric("t_star", t);
    }
    out.absorb(0, rec);
    Ok(out)
}

fn hyperns(cfg: &ScenarioConfig) -> Result<(Arc<SpectralGrid>, HyperNs), LabError> {
    let nu = cfg.required("nu", cfg.model.nu)?;
    let grid = grid_2d(cfg)?;
    let model = setup(HyperNs::new(&grid, nu))?;
    Ok((grid, model))
}

fn hyperns_decay(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let (grid, model) = hyperns(cfg)?;
    let u0 = initial_field(cfg, &grid, ScalarKind::Real, cfg.initial.amplitude, cfg.seed)?;
    let mut probe = HyperNsProbe::new(model.clone());
    let rec = integrate(&u0, &model, cfg, &mut probe)?;
    let vel = rec.column("velocity").unwrap_or_default();
    let q = rec.column("q").unwrap_or_default();
    let rep = diagnostics::hyperns_sandwich_check(&rec.times(), &vel, &q, model.nu, grid.length(0))?;
    let mut out = Outcome::new(cfg.scenario);
    out.check(
        "upper_bound",
        rep.upper.holds(),
        format!("{} of {} samples above e^(−νλ₁²t)|u₀|", rep.upper.violations, rep.upper.samples),
    );
    out.check(
        "q_converges",
        rep.q_oscillation < 0.05 && rep.q_settling,
        format!("final-window oscillation {:.3e}, settling {}", rep.q_oscillation, rep.q_settling),
    );
    out.check(
        "q_shell",
        rep.shell_error < 0.05,
        format!("q = {:.6e} within {:.3e} of shell {}", rep.q_final, rep.shell_error, rep.shell),
    );
    out.metric("q_final", rep.q_final);
    out.metric("shell", rep.shell as f64);
    out.metric("lower_bound_fraction", rep.lower_fraction);
    out.absorb(0, rec);
    Ok(out)
}

fn hyperns_eigenflow(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let (grid, model) = hyperns(cfg)?;
    let u0 = initial_field(cfg, &grid, ScalarKind::Real, cfg.initial.amplitude, cfg.seed)?;
    let k = 2.0 * PI * cfg.initial.modes as f64 / grid.length(0);
    let rate = model.nu * k.powi(4);
    let mut probe = HyperNsProbe::new(model.clone());
    let rec = integrate(&u0, &model, cfg, &mut probe)?;
    let vel = rec.column("velocity").unwrap_or_default();
    let err = rec
        .times()
        .iter()
        .zip(&vel)
        .map(|(t, v)| (v / vel[0] - (-rate * t).exp()).abs() / (-rate * t).exp())
        .fold(0.0, f64::max);
    let mut out = Outcome::new(cfg.scenario);
    out.check(
        "exact_decay",
        err < 1e-8,
        format!("max relative deviation from e^(−{rate:.6}t) is {err:.3e}"),
    );
    out.metric("decay_rate", rate);
    out.metric("max_rel_error", err);
    out.absorb(0, rec);
    Ok(out)
}

fn cnoidal_travel(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let m0 = cfg.required("m0", cfg.model.m0)?;
    let grid = grid_1d(cfg)?;
    let (p, u0) = setup(elliptic::make_cnoidal(m0, &grid))?;
    let model = setup(Kbs::new(&grid, 0.0, 0.0, 1.0))?;
    let rec = integrate(&u0, &model, cfg, &mut NoProbe)?;
    let exact = u0.translate(-p.shifted_speed * rec.t_final);
    let err = setup(rec.final_state.sub(&exact))?.l2_norm() / u0.l2_norm();
    let mut out = Outcome::new(cfg.scenario);
    out.check(
        "profile_error",
        err < 1e-6,
        format!("relative L² error {err:.3e} at t = {:.6}", rec.t_final),
    );
    out.metric("rel_error", err);
    out.metric("traversal_time", p.traversal_time());
    out.metric("speed", p.shifted_speed);
    out.absorb(0, rec);
    Ok(out)
}

fn cnoidal_eigen(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let m0 = cfg.required("m0", cfg.model.m0)?;
    let grid = grid_1d(cfg)?;
    let (p, _) = setup(elliptic::make_cnoidal(m0, &grid))?;
    let u = elliptic::raw_cnoidal(&p, &grid);
    let psi = Field::from_fn(&grid, |x| p.eigenfunction(x, 0.0));
    let e = elliptic::eigencheck(&u, &psi, p.eigenvalue())?;
    let gap = (e.discrete_eigenvalue - p.eigenvalue()).abs();
    let mut out = Outcome::new(cfg.scenario);
    out.check("residual", e.residual < 1e-8, format!("‖Hψ − λψ‖/‖ψ‖ = {:.3e}", e.residual));
    out.check(
        "collocation_eigenvalue",
        gap < 1e-8,
        format!("λ = {:.12}, dense {:.12}", p.eigenvalue(), e.discrete_eigenvalue),
    );
    out.metric("eigenvalue", p.eigenvalue());
    out.metric("residual", e.residual);
    out.metric("eigenvalue_gap", gap);
    out.metric("norm_sq", e.norm_sq);
    out.final_state = Some(psi);
    Ok(out)
}

/// Amplitude-derived `l` using an eight-fold spectral upsampling.
pub fn l_from_profile(u: &Field, m: f64) -> f64 {
    let (lo, hi) = elliptic::interpolated_extrema(u, 8);
    ((hi - lo) / (12.0 * m)).sqrt()
}

fn modulation(cfg: &ScenarioConfig, kind: PerturbedKdvKind) -> Result<Outcome, LabError> {
    let eps = cfg.required("epsilon", cfg.model.epsilon)?;
    let m0 = cfg.required("m0", cfg.model.m0)?;
    let direction = cfg.model.direction.unwrap_or(Direction::Forward);
    let grid = grid_1d(cfg)?;
    let (p, u0) = setup(elliptic::make_cnoidal(m0, &grid))?;
    let modulation = setup(Modulation::new(kind, eps, m0, p.l0))?;
    let model: Box<dyn SpectralModel> = setup(kind.build(&grid, eps, direction))?;
    let mut out = Outcome::new(cfg.scenario);
    let sign = direction.sign();
    let l_probe = FnProbe::new(&["l_pde", "l_ode"], move |t, u| {
        vec![l_from_profile(u, m0), modulation.l_in(direction, t).unwrap_or(f64::NAN)]
    });
    let mut probes: Vec<Box<dyn Probe>> = vec![Box::new(l_probe)];
    if kind == PerturbedKdvKind::ViscousBbm {
        let bbm = setup(Bbm::new(&grid, eps))?.with_direction(direction);
        probes.push(Box::new(BbmProbe::new(bbm)));
    }
    let rec = integrate(&u0, model.as_ref(), cfg, &mut ProbeChain(probes))?;
    let t = rec.times();
    let l_pde = rec.column("l_pde").unwrap_or_default();
    let l_ode = rec.column("l_ode").unwrap_or_default();
    let ill_posed = kind == PerturbedKdvKind::Viscous && direction == Direction::Backward;
    if !ill_posed {
        out.check("completed", rec.verdict == Verdict::Completed, rec.verdict.label());
    }
    match kind {
        PerturbedKdvKind::Damped => {
            let e0 = rec.samples[0].l2.powi(2);
            let err = rec
                .samples
                .iter()
                .map(|s| {
                    let exact = (-2.0 * eps * sign * s.t).exp() * e0;
                    (s.l2 * s.l2 - exact).abs() / exact
                })
                .fold(0.0, f64::max);
            out.check(
                "energy_law",
                err < 1e-6,
                format!("max relative deviation of |u|² from e^(−2εt)|u₀|² is {err:.3e}"),
            );
            out.metric("energy_law_error", err);
        }
        PerturbedKdvKind::Viscous => match direction {
            Direction::Forward => {
                // window in which the amplitude falls by a factor of two
                let end = l_pde.iter().position(|l| l * l <= 0.5 * l_pde[0] * l_pde[0]);
                let stop = end.unwrap_or(l_pde.len() - 1);
                let err = (0..=stop)
                    .map(|i| (l_pde[i] / l_ode[i] - 1.0).abs())
                    .fold(0.0, f64::max);
                out.check(
                    "modulation_agreement",
                    end.is_some() && err < 0.10,
                    match end {
                        Some(i) => format!(
                            "max |l_pde/l_ode − 1| = {err:.4} up to t = {:.3} (amplitude halved)",
                            t[i]
                        ),
                        None => format!("amplitude did not halve by t = {:.3}", rec.t_final),
                    },
                );
                out.metric("modulation_error", err);
                if let Some(i) = end {
                    out.metric("halving_time", t[i]);
                }
            }
            Direction::Backward => {
                let growing = l_pde.windows(2).all(|w| w[1] >= w[0]);
                let logs: Vec<f64> = l_pde.iter().map(|v| v.ln()).collect();
                let conv = convexity(&t, &logs);
                // secular curvature of log l, averaging out the breathing of the profile
                let (curv, curv_err) = numerics::polyfit(&t, &logs, 2)
                    .map_or((f64::NAN, f64::NAN), |(c, e)| (2.0 * c[2], 2.0 * e[2]));
                out.check(
                    "backward_growth",
                    growing && curv > 2.0 * curv_err && t.len() >= 10,
                    format!(
                        "l monotone increasing: {growing}; (log l)'' = {curv:.3e} ± {curv_err:.1e} \
                         from a quadratic fit over {} samples to s = {:.3}; pointwise {conv:?}",
                        t.len(),
                        rec.t_final
                    ),
                );
                out.metric("log_l_curvature", curv);
                out.metric("log_l_curvature_err", curv_err);
                out.metric("l_final", *l_pde.last().unwrap_or(&f64::NAN));
            }
        },
        PerturbedKdvKind::ViscousBbm => {
            let r = rec.column("energy_residual").unwrap_or_default();
            let worst = r.iter().copied().fold(0.0, f64::max);
            let finite = r.iter().all(|v| v.is_finite());
            out.check(
                "modified_energy",
                finite && worst < 1e-8,
                format!("max relative residual {worst:.3e}"),
            );
            out.metric("energy_residual", worst);
        }
    }
    out.metric("l0", p.l0);
    out.metric("l_final_pde", *l_pde.last().unwrap_or(&f64::NAN));
    out.metric("l_final_ode", *l_ode.last().unwrap_or(&f64::NAN));
    out.absorb(0, rec);
    Ok(out)
}

fn spectrum_report(cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let grid = grid_1d(cfg)?;
    let model = kbs(cfg, &grid, Direction::Forward)?;
    let u0 = initial_field(cfg, &grid, ScalarKind::Real, cfg.initial.amplitude, cfg.seed)?;
    let rec = integrate(&u0, &model, cfg, &mut NoProbe)?;
    let spec = compute_spectrum(&rec.final_state);
    let mut out = Outcome::new(cfg.scenario);
    let norm = rec.final_state.l2_norm().powi(2);
    let parseval = (spec.total() - norm).abs() / norm;
    out.check("parseval", parseval < 1e-12, format!("relative mismatch {parseval:.3e}"));
    out.metric("parseval_error", parseval);
    if let Some(band) = &cfg.spectrum {
        let fit = diagnostics::fit_spectral_slope(&spec, band.k_lo, band.k_hi)?;
        out.metric("slope", fit.slope);
        out.metric("slope_stderr", fit.stderr);
        if let Some(target) = band.expected_slope {
            out.check(
                "inertial_slope",
                (fit.slope - target).abs() <= band.tolerance,
                format!(
                    "slope {:.4} ± {:.4} on [{}, {}], expected {target} ± {}",
                    fit.slope, fit.stderr, band.k_lo, band.k_hi, band.tolerance
                ),
            );
        }
    }
    out.spectrum = Some(spec);
    out.absorb(0, rec);
    Ok(out)
}

/// Flatness of the modal spectrum of a narrow cnoidal wave below
/// `k = l₀L/4`, over the harmonics of the wave's own period `2K/l₀`:
/// returns `(min E_k / max E_k, cutoff)`.
pub fn soliton_plateau(m0: f64, grid: &Arc<SpectralGrid>) -> Result<(f64, f64), LabError> {
    let (p, u) = setup(elliptic::make_cnoidal(m0, grid))?;
    let spec = compute_spectrum(&u);
    let length = grid.length(0);
    let cutoff = p.l0 * length / 4.0;
    let fundamental = (p.l0 * length / (2.0 * p.k)).round().max(1.0);
    let band: Vec<f64> = spec
        .k
        .iter()
        .zip(&spec.energy)
        .filter(|(k, _)| **k >= 1.0 && **k <= cutoff && (**k / fundamental).fract() == 0.0)
        .map(|(_, e)| *e)
        .collect();
    if band.is_empty() {
        return Err(LabError::Config(format!("no modes below cutoff {cutoff}")));
    }
    let hi = band.iter().copied().fold(0.0, f64::max);
    let lo = band.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((lo / hi, cutoff))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(scenario: &str, extra: &str) -> ScenarioConfig {
        let text = format!(
            "scenario = \"{scenario}\"\n{extra}\n[integrator]\ndt0 = 0.01\nt_end = 0.1\n"
        );
        ScenarioConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn random_initial_data_is_normalized_and_seeded() {
        let cfg = base(
            "kbs-backward-blowup",
            "[grid]\nn = 64\nlength = 6.283185307179586\n[initial]\nkind = \"random\"\namplitude = 2.5\nmodes = 4",
        );
        let g = grid_1d(&cfg).unwrap();
        let a = initial_field(&cfg, &g, ScalarKind::Real, 2.5, 7).unwrap();
        let b = initial_field(&cfg, &g, ScalarKind::Real, 2.5, 7).unwrap();
        let c = initial_field(&cfg, &g, ScalarKind::Real, 2.5, 8).unwrap();
        assert!((a.l2_norm() - 2.5).abs() < 1e-12);
        assert!(a.mean().norm() < 1e-14);
        assert_eq!(a.coeffs(), b.coeffs());
        assert_ne!(a.coeffs(), c.coeffs());
        let top = a.coeffs()[5..59].iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert_eq!(top, 0.0);
    }

    #[test]
    fn uniform_complex_data_has_requested_norm() {
        let cfg = base(
            "cgl-backward-riccati",
            "[grid]\nn = 16\nlength = 6.283185307179586\n[initial]\nkind = \"uniform\"\namplitude = 3.5449077018110318\nperturbation = 0.01\nmodes = 2",
        );
        let g = grid_1d(&cfg).unwrap();
        let u = initial_field(&cfg, &g, ScalarKind::Complex, 12.566370614359172f64.sqrt(), 0).unwrap();
        assert!((u.l2_norm().powi(2) - 4.0 * PI).abs() < 1e-12);
        assert_eq!(u.kind(), ScalarKind::Complex);
    }

    #[test]
    fn forcing_outside_band_is_a_config_error() {
        let cfg = base(
            "kdv-backward-bounded",
            "[grid]\nn = 16\nlength = 6.283185307179586\n[model]\nbeta = 1.0\nforcing = [{ mode = 7, sin = 1.0 }]\n[initial]\nkind = \"random\"",
        );
        let g = grid_1d(&cfg).unwrap();
        assert!(matches!(forcing_field(&cfg, &g), Err(LabError::Config(_))));
    }

    #[test]
    fn missing_model_parameter_is_reported() {
        let cfg = base(
            "nls-backward-growth",
            "[grid]\nn = 16\nlength = 6.283185307179586\n[initial]\nkind = \"random\"",
        );
        match run_scenario(&cfg) {
            Err(LabError::Config(m)) => assert!(m.contains("lambda")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn entry_time_of_decaying_run() {
        let cfg = base(
            "kbs-forward-absorbing",
            "[grid]\nn = 32\nlength = 6.283185307179586\n[model]\nnu = 1.0\n[initial]\nkind = \"random\"\namplitude = 4.0\nmodes = 2",
        );
        let g = grid_1d(&cfg).unwrap();
        let model = kbs(&cfg, &g, Direction::Forward).unwrap();
        let u0 = initial_field(&cfg, &g, ScalarKind::Real, 4.0, 0).unwrap();
        let rec = integrate(&u0, &model, &cfg, &mut NoProbe).unwrap();
        assert_eq!(entry_time(&rec, 10.0), Some(0.0));
        let t = entry_time(&rec, 3.9).unwrap();
        assert!(t > 0.0 && t < 0.1);
        assert_eq!(entry_time(&rec, 1e-3), None);
    }
}
