//! The acceptance suite: fifteen criteria, each a self-contained experiment
//! built from the bundled configurations in `configs/`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use backlab_core::elliptic::{modulation_constants, CnoidalParams};
use backlab_core::gauge::{self, BumpFunction, GaugeFunction};
use backlab_core::numerics;
use backlab_core::{Field, ModulationConstants, SpectralGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::persist::write_series_csv_string;
use crate::scenarios::{run_scenario, soliton_plateau, Outcome};
use crate::sweep::{run_sweep, Axis, SweepSpec};
use crate::{LabError, EXIT_FAILED, EXIT_OK};

/// Bundled configurations, by file stem.
pub const CONFIGS: &[(&str, &str)] = &[
    ("cnoidal-travel", include_str!("../configs/cnoidal-travel.toml")),
    ("cnoidal-eigen", include_str!("../configs/cnoidal-eigen.toml")),
    ("modulation-damped", include_str!("../configs/modulation-damped.toml")),
    ("modulation-viscous", include_str!("../configs/modulation-viscous.toml")),
    ("modulation-viscous-backward", include_str!("../configs/modulation-viscous-backward.toml")),
    ("modulation-bbm", include_str!("../configs/modulation-bbm.toml")),
    ("kdv-backward-bounded", include_str!("../configs/kdv-backward-bounded.toml")),
    ("kbs-backward-blowup", include_str!("../configs/kbs-backward-blowup.toml")),
    ("kbs-lifespan-sweep", include_str!("../configs/kbs-lifespan-sweep.toml")),
    ("kbs-forward-absorbing", include_str!("../configs/kbs-forward-absorbing.toml")),
    ("kbs-length-sweep", include_str!("../configs/kbs-length-sweep.toml")),
    ("kbs-gauge-monitor", include_str!("../configs/kbs-gauge-monitor.toml")),
    ("nls-backward-growth", include_str!("../configs/nls-backward-growth.toml")),
    ("cgl-backward-riccati", include_str!("../configs/cgl-backward-riccati.toml")),
    ("hyperns-eigenflow", include_str!("../configs/hyperns-eigenflow.toml")),
    ("hyperns-decay", include_str!("../configs/hyperns-decay.toml")),
    ("spectrum-report", include_str!("../configs/spectrum-report.toml")),
];

pub fn bundled(name: &str) -> Result<ScenarioConfig, LabError> {
    let text = CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| LabError::Config(format!("no bundled config `{name}`")))?;
    ScenarioConfig::from_toml(text)
}

pub fn bundled_sweep(name: &str) -> Result<SweepSpec, LabError> {
    let text = CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| LabError::Config(format!("no bundled sweep `{name}`")))?;
    SweepSpec::from_toml(text)
}

pub const CRITERIA: [(u8, &str); 15] = [
    (1, "cnoidal exactness"),
    (2, "cnoidal eigenpair"),
    (3, "modulation constants"),
    (4, "damped KdV energy law"),
    (5, "viscous KdV modulation"),
    (6, "BBM modified energy"),
    (7, "forced KdV backward boundedness"),
    (8, "KBS backward blow-up"),
    (9, "absorbing ball"),
    (10, "NLS backward sandwich"),
    (11, "CGL Riccati domination"),
    (12, "hyperviscous NSE"),
    (13, "gauge machinery"),
    (14, "spectra"),
    (15, "infrastructure"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    /// One line per sub-check.
    pub detail: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<34} {} ({:.1} s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds
        )
    }
}

#[derive(Default)]
struct Tally {
    passed: bool,
    detail: Vec<String>,
    metrics: BTreeMap<String, f64>,
}

impl Tally {
    fn new() -> Tally {
        Tally { passed: true, ..Tally::default() }
    }

    fn check(&mut self, ok: bool, line: impl Into<String>) {
        self.passed &= ok;
        self.detail.push(format!("[{}] {}", if ok { "ok" } else { "FAIL" }, line.into()));
    }

    fn outcome(&mut self, label: &str, out: &Outcome) {
        for c in &out.checks {
            self.check(c.passed, format!("{label} {}: {}", c.name, c.detail));
        }
        for (k, v) in &out.metrics {
            self.metrics.insert(format!("{label}.{k}"), *v);
        }
    }

    fn metric(&mut self, k: &str, v: f64) {
        self.metrics.insert(k.to_string(), v);
    }
}

fn scenario(t: &mut Tally, label: &str, cfg: &ScenarioConfig) -> Result<Outcome, LabError> {
    let out = run_scenario(cfg)?;
    t.outcome(label, &out);
    Ok(out)
}

fn c1(t: &mut Tally) -> Result<(), LabError> {
    let cfg = bundled("cnoidal-travel")?;
    let p = CnoidalParams::new(cfg.model.m0.unwrap_or(0.9), cfg.grid.length)?;
    let cfg = cfg.with_param("integrator.t_end", p.traversal_time())?;
    let start = Instant::now();
    scenario(t, "travel", &cfg)?;
    let secs = start.elapsed().as_secs_f64();
    t.check(secs < 30.0, format!("runtime {secs:.2} s < 30 s"));
    Ok(())
}

fn c2(t: &mut Tally) -> Result<(), LabError> {
    let base = bundled("cnoidal-eigen")?;
    for m in [0.5, 0.9, 0.99] {
        scenario(t, &format!("m0={m}"), &base.with_param("model.m0", m)?)?;
    }
    Ok(())
}

fn c3(t: &mut Tally) -> Result<(), LabError> {
    let q = modulation_constants().as_array();
    let exact = ModulationConstants::CLOSED_FORM.as_array();
    for (i, name) in ["C", "C1", "C2", "C3", "C4"].iter().enumerate() {
        let err = (q[i] - exact[i]).abs();
        t.metric(name, q[i]);
        t.check(err < 1e-10, format!("{name} = {:.15} vs {:.15}, error {err:.2e}", q[i], exact[i]));
    }
    Ok(())
}

fn c4(t: &mut Tally) -> Result<(), LabError> {
    scenario(t, "damped", &bundled("modulation-damped")?).map(drop)
}

fn c5(t: &mut Tally) -> Result<(), LabError> {
    scenario(t, "forward", &bundled("modulation-viscous")?)?;
    scenario(t, "backward", &bundled("modulation-viscous-backward")?).map(drop)
}

fn c6(t: &mut Tally) -> Result<(), LabError> {
    scenario(t, "bbm", &bundled("modulation-bbm")?).map(drop)
}

fn c7(t: &mut Tally) -> Result<(), LabError> {
    scenario(t, "kdv", &bundled("kdv-backward-bounded")?).map(drop)
}

fn c8(t: &mut Tally) -> Result<(), LabError> {
    let base = bundled("kbs-backward-blowup")?;
    let n = base.grid.n;
    let coarse = scenario(t, &format!("N={n}"), &base)?;
    let fine = scenario(t, &format!("N={}", 2 * n), &base.with_param("grid.n", (2 * n) as f64)?)?;
    let est = |o: &Outcome| o.metrics.get("t_estimate").copied();
    match (est(&coarse), est(&fine)) {
        (Some(a), Some(b)) => {
            let gap = (a - b).abs() / b;
            t.metric("refinement_gap", gap);
            t.check(gap < 0.10, format!("T* estimates {a:.5} and {b:.5} differ by {:.2}%", 100.0 * gap));
        }
        (a, b) => t.check(false, format!("missing T* estimate: {a:?}, {b:?}")),
    }
    scenario(t, "lifespan", &bundled("kbs-lifespan-sweep")?).map(drop)
}

fn c9(t: &mut Tally) -> Result<(), LabError> {
    scenario(t, "ball", &bundled("kbs-forward-absorbing")?)?;
    let rep = run_sweep(&bundled_sweep("kbs-length-sweep")?)?;
    for c in &rep.cells {
        if let Some(e) = &c.error {
            t.check(false, format!("cell {}: {e}", c.index));
        }
    }
    match rep.fits.iter().find(|f| f.param == "grid.length") {
        Some(f) => {
            t.metric("length_slope", f.slope);
            t.metric("length_slope_err", f.stderr);
            t.check(
                f.within_bound == Some(true),
                format!("terminal radius ~ L^{:.3} ± {:.3}, bound exponent 2.5", f.slope, f.stderr),
            );
        }
        None => t.check(false, "no length fit"),
    }
    Ok(())
}

fn c10(t: &mut Tally) -> Result<(), LabError> {
    scenario(t, "nls", &bundled("nls-backward-growth")?).map(drop)
}

fn c11(t: &mut Tally) -> Result<(), LabError> {
    scenario(t, "cgl", &bundled("cgl-backward-riccati")?).map(drop)
}

fn c12(t: &mut Tally) -> Result<(), LabError> {
    scenario(t, "eigenflow", &bundled("hyperns-eigenflow")?)?;
    scenario(t, "decay", &bundled("hyperns-decay")?).map(drop)
}

fn random_profile(grid: &Arc<SpectralGrid>, seed: u64, amp: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<(f64, f64)> = (0..6).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let l = grid.length(0);
    Field::from_fn(grid, |x| {
        c.iter()
            .enumerate()
            .map(|(j, (a, b))| {
                let k = 2.0 * PI * (j + 1) as f64 / l;
                amp * (a * (k * x).cos() + b * (k * x).sin())
            })
            .sum()
    })
}

/// `min_ξ |u − φ(·+ξ)|²` by brute force: every shift on a grid 64 times finer,
/// then golden-section on the exact translate around the best one.
fn dense_minimum(u: &Field, phi: &Field) -> f64 {
    let l = u.grid().length(0);
    let n = u.grid().n(0) * 64;
    let h = l / n as f64;
    let dist = |xi: f64| u.sub(&phi.translate(xi)).map_or(f64::NAN, |d| d.l2_norm().powi(2));
    let best = (0..n)
        .map(|m| (m, dist(m as f64 * h)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(m, _)| m);
    let c = best as f64 * h;
    numerics::golden_section(dist, c - h, c + h, 1e-13 * l).1
}

fn c13(t: &mut Tally) -> Result<(), LabError> {
    let l = 2.0 * PI;
    let grid = Arc::new(SpectralGrid::new_1d(512, l)?);
    for d in [4.0, 8.0, 16.0, 32.0] {
        let eps = l / d;
        let bump = BumpFunction::new(eps, &grid)?;
        let s = bump.samples();
        let support = (0..s.len()).all(|i| {
            let x = grid.x(0, i);
            let r = x.min(l - x);
            r < eps || s[i] == 0.0
        });
        let nonneg = s.iter().all(|v| *v >= 0.0);
        let mass = (bump.integral / l - 1.0).abs();
        t.check(
            support && nonneg && mass < 1e-12,
            format!("bump ε=L/{d}: support {support}, b ≥ 0 {nonneg}, |∫b/L − 1| = {mass:.1e}"),
        );
        let g = GaugeFunction::new(1.0, &bump)?;
        let c = g.constants;
        let finite = [c.phi, c.phi_x, c.phi_xx, bump.constants.sup, bump.constants.l2, bump.constants.derivative_l2]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        t.check(
            finite && g.endpoint_mismatch < 1e-9 * l,
            format!(
                "gauge ε=L/{d}: φ(L) − φ(0) = {:.1e}, |φ|, |φ′|, |φ″| ratios {:.4}, {:.4}, {:.4}",
                g.endpoint_mismatch, c.phi, c.phi_x, c.phi_xx
            ),
        );
        t.metric(&format!("gauge_phi_xx_ratio_L/{d}"), c.phi_xx);
        let mut worst_gap: f64 = 0.0;
        let mut worst_fo: f64 = 0.0;
        for seed in 0..3 {
            let u = random_profile(&grid, seed, 0.5);
            let v = gauge::lyapunov_f(&u, &g)?;
            let dense = dense_minimum(&u, g.field());
            worst_gap = worst_gap.max((v.f - dense).abs() / dense.max(1.0));
            worst_fo = worst_fo.max(v.first_order.abs());
        }
        t.metric(&format!("minimizer_gap_L/{d}"), worst_gap);
        t.metric(&format!("first_order_L/{d}"), worst_fo);
        t.check(worst_gap < 1e-8, format!("F vs dense scan ε=L/{d}: {worst_gap:.2e}"));
        t.check(worst_fo < 1e-6, format!("first-order residual ε=L/{d}: {worst_fo:.2e}"));
    }
    scenario(t, "monitor", &bundled("kbs-gauge-monitor")?).map(drop)
}

/// The narrow cnoidal wave whose spectrum is probed for a plateau.
pub const PLATEAU_M0: f64 = 0.999999;
pub const PLATEAU_N: usize = 1024;

fn c14(t: &mut Tally) -> Result<(), LabError> {
    scenario(t, "burgers", &bundled("spectrum-report")?)?;
    let grid = Arc::new(SpectralGrid::new_1d(PLATEAU_N, 2.0 * PI)?);
    let (ratio, cutoff) = soliton_plateau(PLATEAU_M0, &grid)?;
    t.metric("plateau_ratio", ratio);
    t.metric("plateau_cutoff", cutoff);
    t.check(
        ratio >= 0.5,
        format!("soliton E_k min/max = {ratio:.4} over 1 ≤ k ≤ {cutoff:.1} (flat within 2 needs ≥ 0.5)"),
    );
    Ok(())
}

fn c15(t: &mut Tally) -> Result<(), LabError> {
    let cfg = bundled("kbs-backward-blowup")?
        .with_param("grid.n", 64.0)?
        .with_param("integrator.t_end", 0.05)?;
    let a = run_scenario(&cfg)?;
    let b = run_scenario(&cfg)?;
    let same = write_series_csv_string(&a.series)? == write_series_csv_string(&b.series)?;
    t.check(same, format!("rerun series identical over {} rows", a.series.rows.len()));

    let mut spec = bundled_sweep("kbs-length-sweep")?;
    spec.base = spec.base.with_param("integrator.t_end", 2.0)?;
    spec.axes = vec![Axis {
        param: "initial.amplitude".into(),
        values: vec![0.5, 1.0, 2.0],
        linked: BTreeMap::new(),
    }];
    spec.threads = Some(1);
    let serial = run_sweep(&spec)?;
    spec.threads = Some(3);
    let parallel = run_sweep(&spec)?;
    spec.axes[0].values.reverse();
    let reversed = run_sweep(&spec)?;
    let key = |r: &crate::sweep::SweepReport| {
        let mut v: Vec<_> = r
            .cells
            .iter()
            .map(|c| (c.config_hash.clone(), c.metrics.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect::<Vec<_>>()))
            .collect();
        v.sort();
        v
    };
    t.check(
        serial.cells == parallel.cells && key(&serial) == key(&reversed),
        "sweep results independent of worker count and axis order",
    );

    let codes = [
        (LabError::Config(String::new()).exit_code(), 2),
        (LabError::Io(std::io::Error::other("")).exit_code(), 3),
        (LabError::Missing(String::new()).exit_code(), 3),
        (exit_code(&[]), EXIT_OK),
    ];
    t.check(codes.iter().all(|(a, b)| a == b), "exit-code mapping 0/1/2/3");
    Ok(())
}

/// Exit code for a finished suite: nonzero when any criterion failed.
pub fn exit_code(results: &[CriterionResult]) -> i32 {
    if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

pub fn run_criterion(id: u8) -> Result<CriterionResult, LabError> {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| n.to_string())
        .ok_or_else(|| LabError::Config(format!("no criterion {id}")))?;
    let start = Instant::now();
    let mut t = Tally::new();
    let run = match id {
        1 => c1(&mut t),
        2 => c2(&mut t),
        3 => c3(&mut t),
        4 => c4(&mut t),
        5 => c5(&mut t),
        6 => c6(&mut t),
        7 => c7(&mut t),
        8 => c8(&mut t),
        9 => c9(&mut t),
        10 => c10(&mut t),
        11 => c11(&mut t),
        12 => c12(&mut t),
        13 => c13(&mut t),
        14 => c14(&mut t),
        _ => c15(&mut t),
    };
    if let Err(e) = run {
        t.check(false, format!("error: {e}"));
    }
    Ok(CriterionResult {
        id,
        name,
        passed: t.passed,
        detail: t.detail,
        metrics: t.metrics,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run the selected criteria (all when `only` is empty), in id order.
pub fn run_all(only: &[u8]) -> Result<Vec<CriterionResult>, LabError> {
    CRITERIA
        .iter()
        .map(|(id, _)| *id)
        .filter(|id| only.is_empty() || only.contains(id))
        .map(run_criterion)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse() {
        for (name, _) in CONFIGS {
            if *name == "kbs-length-sweep" {
                bundled_sweep(name).unwrap();
            } else {
                bundled(name).unwrap();
            }
        }
    }

    #[test]
    fn unknown_criterion_is_a_config_error() {
        assert!(matches!(run_criterion(16), Err(LabError::Config(_))));
    }

    #[test]
    fn exit_code_follows_results() {
        let mut r = run_criterion(3).unwrap();
        assert!(r.passed, "{:?}", r.detail);
        assert_eq!(exit_code(std::slice::from_ref(&r)), EXIT_OK);
        r.passed = false;
        assert_eq!(exit_code(&[r]), EXIT_FAILED);
    }
}
