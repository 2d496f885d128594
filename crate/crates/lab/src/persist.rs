use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use backlab_core::spectral::checkpoint;
use backlab_core::Verdict;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, ScenarioId};
use crate::scenarios::{run_scenario, Check, Outcome, Series};
use crate::LabError;

pub const ARTIFACT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Config,
    Series,
    Spectrum,
    Checkpoint,
    FinalState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub kind: FileKind,
    /// Path relative to the run directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: u32,
    pub scenario: ScenarioId,
    pub config_hash: String,
    /// Milliseconds since the Unix epoch.
    pub started_ms: u64,
    pub finished_ms: u64,
    pub verdict: Verdict,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<RunManifest, LabError> {
        let p = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&p)
            .map_err(|e| LabError::Missing(format!("{}: {e}", p.display())))?;
        serde_json::from_str(&text).map_err(|e| LabError::Missing(format!("{}: {e}", p.display())))
    }

    pub fn file(&self, kind: FileKind) -> Option<&str> {
        self.files.iter().find(|f| f.kind == kind).map(|f| f.path.as_str())
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Default run directory: `runs/<scenario>-<hash prefix>`.
pub fn default_dir(cfg: &ScenarioConfig) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-{}", cfg.scenario, &cfg.hash()[..12]))
}

/// Series as CSV text: a header of column names, then one row per sample
/// with values in shortest round-trip form.
pub fn write_series_csv_string(series: &Series) -> Result<String, LabError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&series.columns).map_err(csv_err)?;
    for row in &series.rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_series_csv(path: &Path, series: &Series) -> Result<(), LabError> {
    fs::write(path, write_series_csv_string(series)?)?;
    Ok(())
}

pub fn read_series_csv(path: &Path) -> Result<Series, LabError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| LabError::Missing(format!("{}: {e}", path.display())))?;
    let columns = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| LabError::Missing(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(Series { columns, rows })
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Io(std::io::Error::other(e.to_string()))
}

/// Write every artifact of `out` into `dir`, the manifest last and atomically.
pub fn persist(
    cfg: &ScenarioConfig,
    out: &Outcome,
    dir: &Path,
    started_ms: u64,
) -> Result<RunManifest, LabError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    files.push(FileEntry { kind: FileKind::Config, path: "config.toml".into() });

    if !out.series.columns.is_empty() {
        write_series_csv(&dir.join("series.csv"), &out.series)?;
        files.push(FileEntry { kind: FileKind::Series, path: "series.csv".into() });
    }
    if let Some(spec) = &out.spectrum {
        let mut w = csv::Writer::from_path(dir.join("spectrum.csv")).map_err(csv_err)?;
        w.write_record(["k", "energy"]).map_err(csv_err)?;
        for (k, e) in spec.to_csv_rows() {
            w.write_record([k.to_string(), e.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        files.push(FileEntry { kind: FileKind::Spectrum, path: "spectrum.csv".into() });
    }
    if !out.checkpoints.is_empty() {
        fs::create_dir_all(dir.join("checkpoints"))?;
        for (i, (_, f)) in out.checkpoints.iter().enumerate() {
            let rel = format!("checkpoints/state-{i:05}.bin");
            checkpoint::save(&dir.join(&rel), f)?;
            files.push(FileEntry { kind: FileKind::Checkpoint, path: rel });
        }
    }
    if let Some(f) = &out.final_state {
        checkpoint::save(&dir.join("final.bin"), f)?;
        files.push(FileEntry { kind: FileKind::FinalState, path: "final.bin".into() });
    }

    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION,
        scenario: out.scenario,
        config_hash: cfg.hash(),
        started_ms,
        finished_ms: now_ms(),
        verdict: out.verdict.clone(),
        passed: out.passed(),
        checks: out.checks.clone(),
        metrics: out.metrics.clone(),
        files,
    };
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest).expect("serializable"))?;
    Ok(manifest)
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), LabError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Run a scenario and persist it into its output directory.
pub fn run_and_persist(cfg: &ScenarioConfig) -> Result<(Outcome, RunManifest), LabError> {
    let started = now_ms();
    let out = run_scenario(cfg)?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| default_dir(cfg));
    let manifest = persist(cfg, &out, &dir, started)?;
    Ok((out, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path) -> ScenarioConfig {
        let text = format!(
            r#"
scenario = "hyperns-eigenflow"
output_dir = "{}"
[grid]
n = 16
length = 6.283185307179586
[model]
nu = 1.0
[initial]
kind = "eigenflow"
modes = 1
[integrator]
dt0 = 0.01
t_end = 0.2
record_every = 5
checkpoint_every = 2
"#,
            dir.display()
        );
        ScenarioConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn persists_manifest_and_inventory() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let (out, m) = run_and_persist(&cfg(&dir)).unwrap();
        assert!(out.passed());
        assert_eq!(m.artifact_version, ARTIFACT_VERSION);
        assert!(m.finished_ms >= m.started_ms);
        for f in &m.files {
            assert!(dir.join(&f.path).exists(), "{}", f.path);
        }
        assert!(m.file(FileKind::Checkpoint).is_some());
        assert!(!dir.join("manifest.tmp").exists());
        let back = RunManifest::load(&dir).unwrap();
        assert_eq!(back, m);
        let series = read_series_csv(&dir.join("series.csv")).unwrap();
        assert_eq!(series, out.series);
        let state = checkpoint::load(&dir.join("final.bin")).unwrap();
        assert_eq!(state.coeffs(), out.final_state.unwrap().coeffs());
    }

    #[test]
    fn missing_manifest_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(RunManifest::load(tmp.path()), Err(LabError::Missing(_))));
    }
}
