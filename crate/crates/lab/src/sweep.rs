use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, ScenarioId};
use crate::persist::{persist, write_atomic};
use crate::scenarios::run_scenario;
use crate::LabError;

pub const MAX_AXES: usize = 3;
pub const MAX_CELLS: usize = 10_000;

/// One sweep axis. `linked` parameters move in lockstep with `param`
/// (e.g. the grid size alongside the domain length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub linked: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axes: Vec<Axis>,
    /// Worker count; `LAB_THREADS` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Metric fitted against each axis; defaults to `terminal_radius`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<SweepSpec, LabError> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<SweepSpec, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        SweepSpec::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        self.base.validate()?;
        if self.axes.len() > MAX_AXES {
            return Err(LabError::Config(format!("at most {MAX_AXES} axes, got {}", self.axes.len())));
        }
        for a in &self.axes {
            if a.values.is_empty() {
                return Err(LabError::Config(format!("axis `{}` has no values", a.param)));
            }
            for (k, v) in &a.linked {
                if v.len() != a.values.len() {
                    return Err(LabError::Config(format!(
                        "linked `{k}` has {} values, axis `{}` has {}",
                        v.len(),
                        a.param,
                        a.values.len()
                    )));
                }
            }
        }
        let cells = self.axes.iter().try_fold(1usize, |n, a| n.checked_mul(a.values.len()));
        match cells {
            Some(n) if n <= MAX_CELLS => Ok(()),
            _ => Err(LabError::Config(format!("sweep exceeds {MAX_CELLS} cells"))),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Axis indices of cell `i` (last axis fastest).
    pub fn cell_indices(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = i % a.values.len();
            i /= a.values.len();
        }
        idx
    }

    pub fn cell_config(&self, i: usize) -> Result<(ScenarioConfig, Vec<(String, f64)>), LabError> {
        let mut cfg = self.base.clone();
        let mut params = Vec::new();
        for (a, j) in self.axes.iter().zip(self.cell_indices(i)) {
            cfg = cfg.with_param(&a.param, a.values[j])?;
            params.push((a.param.clone(), a.values[j]));
            for (k, v) in &a.linked {
                cfg = cfg.with_param(k, v[j])?;
                params.push((k.clone(), v[j]));
            }
        }
        Ok((cfg, params))
    }
}

/// Worker count from `LAB_THREADS`, else the given default, else all cores.
pub fn thread_count(default: Option<usize>) -> usize {
    std::env::var("LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .or(default)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub params: Vec<(String, f64)>,
    pub config_hash: String,
    pub verdict: Option<String>,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisFit {
    pub param: String,
    pub metric: String,
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
    /// Upper-bound exponent for this parameter, if one is known.
    pub bound: Option<f64>,
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: ScenarioId,
    pub cells: Vec<CellResult>,
    pub fits: Vec<AxisFit>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(|c| c.passed && c.error.is_none())
            && self.fits.iter().all(|f| f.within_bound != Some(false))
    }
}

/// Asymptotic exponents of the absorbing-ball radius bound.
pub fn bound_exponent(scenario: ScenarioId, param: &str) -> Option<f64> {
    if scenario != ScenarioId::KbsForwardAbsorbing {
        return None;
    }
    match param {
        "grid.length" => Some(2.5),
        "model.nu" => Some(-2.0),
        "model.beta" => Some(2.5),
        "model.gamma" => Some(1.0),
        _ => None,
    }
}

/// A measured exponent respects a bound `ρ ≲ p^b` when it does not exceed
/// `b` in the direction in which the bound grows.
pub fn within_bound(slope: f64, stderr: f64, bound: f64) -> bool {
    if bound >= 0.0 {
        slope <= bound + stderr
    } else {
        slope >= bound - stderr
    }
}

fn run_cell(spec: &SweepSpec, i: usize) -> CellResult {
    let (cfg, params) = match spec.cell_config(i) {
        Ok(c) => c,
        Err(e) => {
            return CellResult {
                index: i,
                params: Vec::new(),
                config_hash: String::new(),
                verdict: None,
                passed: false,
                metrics: BTreeMap::new(),
                error: Some(e.to_string()),
            }
        }
    };
    let hash = cfg.hash();
    let result = run_scenario(&cfg).and_then(|out| {
        if let Some(dir) = &spec.base.output_dir {
            persist(&cfg, &out, &dir.join(format!("cell-{i:05}")), 0)?;
        }
        Ok(out)
    });
    match result {
        Ok(out) => CellResult {
            index: i,
            params,
            config_hash: hash,
            verdict: Some(out.verdict.label().to_string()),
            passed: out.passed(),
            metrics: out.metrics,
            error: None,
        },
        Err(e) => CellResult {
            index: i,
            params,
            config_hash: hash,
            verdict: None,
            passed: false,
            metrics: BTreeMap::new(),
            error: Some(e.to_string()),
        },
    }
}

fn fit_axes(spec: &SweepSpec, cells: &[CellResult]) -> Vec<AxisFit> {
    let metric = spec.metric.clone().unwrap_or_else(|| "terminal_radius".into());
    let mut fits = Vec::new();
    for (k, axis) in spec.axes.iter().enumerate() {
        if axis.values.len() < 2 {
            continue;
        }
        // cells where every other axis sits at its first value
        let (x, y): (Vec<f64>, Vec<f64>) = cells
            .iter()
            .filter(|c| {
                spec.cell_indices(c.index).iter().enumerate().all(|(j, v)| j == k || *v == 0)
            })
            .filter_map(|c| {
                let x = axis.values[spec.cell_indices(c.index)[k]];
                c.metrics.get(&metric).map(|y| (x, *y))
            })
            .unzip();
        if let Ok((slope, stderr)) = backlab_core::diagnostics::loglog_slope(&x, &y) {
            let bound = bound_exponent(spec.base.scenario, &axis.param);
            fits.push(AxisFit {
                param: axis.param.clone(),
                metric: metric.clone(),
                slope,
                stderr,
                points: x.len(),
                bound,
                within_bound: bound.map(|b| within_bound(slope, stderr, b)),
            });
        }
    }
    fits
}

/// Run every cell on a fixed-size worker pool and aggregate in cell order.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport, LabError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(spec.threads))
        .build()
        .map_err(|e| LabError::Config(e.to_string()))?;
    let cells: Vec<CellResult> =
        pool.install(|| (0..spec.cell_count()).into_par_iter().map(|i| run_cell(spec, i)).collect());
    let report = SweepReport {
        scenario: spec.base.scenario,
        fits: fit_axes(spec, &cells),
        cells,
    };
    if let Some(dir) = &spec.base.output_dir {
        std::fs::create_dir_all(dir)?;
        write_atomic(
            &dir.join("sweep.json"),
            &serde_json::to_vec_pretty(&report).expect("serializable"),
        )?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(axes: &str) -> SweepSpec {
        let text = format!(
            r#"
{axes}
[base]
scenario = "hyperns-eigenflow"
[base.grid]
n = 16
length = 6.283185307179586
[base.model]
nu = 1.0
[base.initial]
kind = "eigenflow"
modes = 1
[base.integrator]
dt0 = 0.01
t_end = 0.1
"#
        );
        SweepSpec::from_toml(&text).unwrap()
    }

    #[test]
    fn cell_enumeration_is_row_major() {
        let s = spec(
            "[[axes]]\nparam = \"model.nu\"\nvalues = [1.0, 2.0]\n[[axes]]\nparam = \"initial.amplitude\"\nvalues = [1.0, 2.0, 3.0]",
        );
        assert_eq!(s.cell_count(), 6);
        assert_eq!(s.cell_indices(0), vec![0, 0]);
        assert_eq!(s.cell_indices(4), vec![1, 1]);
        let (cfg, params) = s.cell_config(5).unwrap();
        assert_eq!(cfg.model.nu, Some(2.0));
        assert_eq!(cfg.initial.amplitude, 3.0);
        assert_eq!(params.len(), 2);
    }

    #[test]
    fn guards_reject_oversized_sweeps() {
        let big: Vec<String> = (0..101).map(|i| format!("{}.0", i + 1)).collect();
        let axis = |p: &str| format!("[[axes]]\nparam = \"{p}\"\nvalues = [{}]\n", big.join(", "));
        let text = format!(
            "{}{}[base]\nscenario = \"hyperns-eigenflow\"\n[base.grid]\nn = 16\nlength = 6.0\n[base.initial]\nkind = \"eigenflow\"\n[base.integrator]\ndt0 = 0.01\nt_end = 0.1\n",
            axis("model.nu"),
            axis("initial.amplitude")
        );
        assert!(matches!(SweepSpec::from_toml(&text), Err(LabError::Config(_))));
        let four = "[[axes]]\nparam = \"model.nu\"\nvalues = [1.0]\n".repeat(4);
        let text = text.replace(&axis("model.nu"), &four).replace(&axis("initial.amplitude"), "");
        assert!(SweepSpec::from_toml(&text).is_err());
    }

    #[test]
    fn linked_lengths_must_match() {
        let r = SweepSpec::from_toml(
            "[[axes]]\nparam = \"grid.length\"\nvalues = [1.0, 2.0]\nlinked = { \"grid.n\" = [16.0] }\n[base]\nscenario = \"hyperns-eigenflow\"\n[base.grid]\nn = 16\nlength = 6.0\n[base.initial]\nkind = \"eigenflow\"\n[base.integrator]\ndt0 = 0.01\nt_end = 0.1\n",
        );
        assert!(r.is_err());
    }

    #[test]
    fn single_cell_matches_direct_run() {
        let s = spec("axes = []");
        let rep = run_sweep(&s).unwrap();
        assert_eq!(rep.cells.len(), 1);
        let direct = run_scenario(&s.base).unwrap();
        assert_eq!(rep.cells[0].metrics, direct.metrics);
        assert_eq!(rep.cells[0].passed, direct.passed());
    }

    #[test]
    fn bound_semantics_follow_sign() {
        assert!(within_bound(2.0, 0.1, 2.5));
        assert!(!within_bound(2.7, 0.1, 2.5));
        assert!(within_bound(-1.0, 0.1, -2.0));
        assert!(!within_bound(-2.5, 0.1, -2.0));
    }

    #[test]
    fn failing_cells_are_recorded() {
        let s = spec("[[axes]]\nparam = \"model.nu\"\nvalues = [1.0, -1.0]");
        let rep = run_sweep(&s).unwrap();
        assert!(rep.cells[0].error.is_none());
        assert!(rep.cells[1].error.is_some());
        assert!(!rep.passed());
    }
}
