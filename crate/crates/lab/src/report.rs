use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use backlab_core::elliptic::{cn_modulation_constants, ellip_k_full, modulation_constants};
use backlab_core::gauge::{BumpFunction, GaugeFunction};
use backlab_core::{ModulationConstants, SpectralGrid};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioId;
use crate::persist::{write_atomic, FileKind, RunManifest};
use crate::LabError;

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: ScenarioId,
    pub config_hash: String,
    pub dir: PathBuf,
    pub verdict: String,
    pub passed: bool,
    pub failures: Vec<String>,
    /// Metrics whose names mark them as fitted exponents or slopes.
    pub exponents: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEntry {
    pub name: String,
    pub measured: f64,
    pub reference: Option<f64>,
}

impl ConstantEntry {
    fn new(name: impl Into<String>, measured: f64, reference: Option<f64>) -> ConstantEntry {
        ConstantEntry { name: name.into(), measured, reference }
    }

    pub fn abs_error(&self) -> Option<f64> {
        self.reference.map(|r| (self.measured - r).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub rows: Vec<ScenarioRow>,
    pub constants: Vec<ConstantEntry>,
    /// Plot-ready series copied into the report directory, relative paths.
    pub series: Vec<String>,
}

impl ReportBundle {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| !r.passed)
            .map(|r| format!("{} ({}): {}", r.scenario, &r.config_hash[..12.min(r.config_hash.len())], r.failures.join(", ")))
            .collect()
    }

    pub fn markdown(&self) -> String {
        let mut s = String::from("# backlab report\n\n");
        if self.rows.is_empty() {
            s.push_str("No runs.\n");
        } else {
            s.push_str("| scenario | config | verdict | result | failed checks |\n");
            s.push_str("|---|---|---|---|---|\n");
            for r in &self.rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    r.scenario,
                    &r.config_hash[..12.min(r.config_hash.len())],
                    r.verdict,
                    if r.passed { "pass" } else { "FAIL" },
                    r.failures.join(", ")
                );
            }
            let fitted: Vec<_> = self.rows.iter().filter(|r| !r.exponents.is_empty()).collect();
            if !fitted.is_empty() {
                s.push_str("\n## Fitted exponents\n\n| scenario | quantity | value |\n|---|---|---|\n");
                for r in fitted {
                    for (k, v) in &r.exponents {
                        let _ = writeln!(s, "| {} | {k} | {v:.6} |", r.scenario);
                    }
                }
            }
        }
        if !self.constants.is_empty() {
            s.push_str("\n## Constants\n\n");
            s.push_str(&constants_table(&self.constants));
        }
        if !self.series.is_empty() {
            s.push_str("\n## Series\n\n");
            for p in &self.series {
                let _ = writeln!(s, "- `{p}`");
            }
        }
        s
    }

    /// Write `report.md`, `report.json` and the copied series into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), LabError> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("report.md"), self.markdown().as_bytes())?;
        write_atomic(&dir.join("report.json"), &serde_json::to_vec_pretty(self).expect("serializable"))?;
        Ok(())
    }
}

pub fn constants_table(entries: &[ConstantEntry]) -> String {
    let mut s = String::from("| constant | measured | reference | abs. error |\n|---|---|---|---|\n");
    for e in entries {
        let (r, d) = match (e.reference, e.abs_error()) {
            (Some(r), Some(d)) => (format!("{r:.15}"), format!("{d:.3e}")),
            _ => ("".into(), "".into()),
        };
        let _ = writeln!(s, "| {} | {:.15} | {r} | {d} |", e.name, e.measured);
    }
    s
}

fn exponent_like(name: &str) -> bool {
    name.contains("slope") || name.contains("exponent")
}

// Periodic integrand, so the trapezoid rule converges geometrically.
fn trapezoid_k(m: f64) -> f64 {
    let n = 4096;
    let h = 2.0 * std::f64::consts::PI / n as f64;
    (0..n).map(|i| (1.0 - m * (i as f64 * h).sin().powi(2)).powf(-0.5)).sum::<f64>() * h
}

/// Measured convention constants: sech moments, cn analogues near the soliton
/// limit, the full-period `K`, and bump/gauge bound ratios.
pub fn constants_ledger() -> Result<Vec<ConstantEntry>, LabError> {
    let mut out = Vec::new();
    let q = modulation_constants();
    let names = ["C", "C1", "C2", "C3", "C4"];
    for ((n, m), r) in names.iter().zip(q.as_array()).zip(ModulationConstants::CLOSED_FORM.as_array()) {
        out.push(ConstantEntry::new(format!("modulation {n}"), m, Some(r)));
    }
    for m in [0.9, 0.99, 0.999] {
        let (c, c1) = cn_modulation_constants(m)?;
        out.push(ConstantEntry::new(format!("cn damped constant, m={m}"), c, None));
        out.push(ConstantEntry::new(format!("cn viscous constant, m={m}"), c1, None));
    }
    for m in [0.5, 0.9, 0.99] {
        out.push(ConstantEntry::new(format!("full-period K, m={m}"), ellip_k_full(m)?, Some(trapezoid_k(m))));
    }
    let length = 2.0 * std::f64::consts::PI;
    let grid = Arc::new(SpectralGrid::new_1d(1024, length)?);
    for d in [4.0, 8.0, 16.0, 32.0] {
        let eps = length / d;
        let bump = BumpFunction::new(eps, &grid)?;
        let g = GaugeFunction::new(1.0, &bump)?;
        let tag = format!("ε=L/{d}");
        out.push(ConstantEntry::new(format!("bump integral / L, {tag}"), bump.integral / length, Some(1.0)));
        out.push(ConstantEntry::new(format!("bump sup·ε/L, {tag}"), bump.constants.sup, None));
        out.push(ConstantEntry::new(format!("bump |b|·ε^½/L, {tag}"), bump.constants.l2, None));
        out.push(ConstantEntry::new(format!("bump |b′|·ε^{{3/2}}/L, {tag}"), bump.constants.derivative_l2, None));
        out.push(ConstantEntry::new(format!("gauge |φ|/(αL^{{3/2}}), {tag}"), g.constants.phi, None));
        out.push(ConstantEntry::new(format!("gauge |φ′| ratio, {tag}"), g.constants.phi_x, None));
        out.push(ConstantEntry::new(format!("gauge |φ″| ratio, {tag}"), g.constants.phi_xx, None));
    }
    Ok(out)
}

fn row(dir: &Path, m: &RunManifest) -> Result<ScenarioRow, LabError> {
    for f in &m.files {
        let p = dir.join(&f.path);
        if !p.exists() {
            return Err(LabError::Missing(p.display().to_string()));
        }
    }
    Ok(ScenarioRow {
        scenario: m.scenario,
        config_hash: m.config_hash.clone(),
        dir: dir.to_path_buf(),
        verdict: m.verdict.label().to_string(),
        passed: m.passed,
        failures: m.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect(),
        exponents: m.metrics.iter().filter(|(k, _)| exponent_like(k)).map(|(k, v)| (k.clone(), *v)).collect(),
    })
}

/// Summarize completed runs. Each series file is copied into `out_dir` as
/// `<scenario>-<hash prefix>.csv`; the constants ledger is attached when
/// `with_constants` is set.
pub fn emit_report(
    runs: &[(PathBuf, RunManifest)],
    out_dir: Option<&Path>,
    with_constants: bool,
) -> Result<ReportBundle, LabError> {
    let mut rows = Vec::with_capacity(runs.len());
    for (dir, m) in runs {
        rows.push(row(dir, m)?);
    }
    let constants = if with_constants { constants_ledger()? } else { Vec::new() };
    let mut series = Vec::new();
    if let Some(out) = out_dir {
        fs::create_dir_all(out)?;
        for (dir, m) in runs {
            if let Some(p) = m.file(FileKind::Series) {
                let name = format!("{}-{}.csv", m.scenario, &m.config_hash[..12.min(m.config_hash.len())]);
                fs::copy(dir.join(p), out.join(&name))?;
                series.push(name);
            }
        }
    }
    let bundle = ReportBundle { rows, constants, series };
    if let Some(out) = out_dir {
        bundle.write(out)?;
    }
    Ok(bundle)
}

/// Load the manifests of the given run directories.
pub fn load_runs(dirs: &[PathBuf]) -> Result<Vec<(PathBuf, RunManifest)>, LabError> {
    dirs.iter().map(|d| RunManifest::load(d).map(|m| (d.clone(), m))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::persist::run_and_persist;

    fn run(dir: &Path, modes: u32) -> (PathBuf, RunManifest) {
        let text = format!(
            "scenario = \"hyperns-eigenflow\"\noutput_dir = \"{}\"\n[grid]\nn = 16\nlength = 6.283185307179586\n[model]\nnu = 1.0\n[initial]\nkind = \"eigenflow\"\nmodes = {modes}\n[integrator]\ndt0 = 0.01\nt_end = 0.1\n",
            dir.display()
        );
        let (_, m) = run_and_persist(&ScenarioConfig::from_toml(&text).unwrap()).unwrap();
        (dir.to_path_buf(), m)
    }

    #[test]
    fn empty_report() {
        let tmp = tempfile::tempdir().unwrap();
        let b = emit_report(&[], Some(tmp.path()), false).unwrap();
        assert!(b.rows.is_empty() && b.passed());
        assert!(b.markdown().contains("No runs."));
        assert!(tmp.path().join("report.json").exists());
    }

    #[test]
    fn failures_are_enumerated() {
        let tmp = tempfile::tempdir().unwrap();
        let mut runs = vec![run(&tmp.path().join("a"), 1), run(&tmp.path().join("b"), 2)];
        runs[1].1.passed = false;
        runs[1].1.checks[0].passed = false;
        let b = emit_report(&runs, Some(&tmp.path().join("rep")), false).unwrap();
        assert!(!b.passed());
        assert_eq!(b.failures().len(), 1);
        assert_eq!(b.series.len(), 2);
        assert!(b.markdown().contains("FAIL"));
        let back: ReportBundle =
            serde_json::from_slice(&fs::read(tmp.path().join("rep/report.json")).unwrap()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn missing_series_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let (dir, m) = run(&tmp.path().join("a"), 1);
        fs::remove_file(dir.join("series.csv")).unwrap();
        assert!(matches!(emit_report(&[(dir, m)], None, false), Err(LabError::Missing(_))));
    }

    #[test]
    fn ledger_matches_closed_forms() {
        let l = constants_ledger().unwrap();
        for e in l.iter().filter(|e| e.reference.is_some()) {
            assert!(e.abs_error().unwrap() < 1e-9, "{}: {}", e.name, e.measured);
        }
        assert!(l.iter().any(|e| e.name.starts_with("gauge")));
    }
}
