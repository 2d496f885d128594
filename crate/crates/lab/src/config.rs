use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use backlab_core::{Direction, IntegratorConfig, PerturbedKdvKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioId {
    KdvBackwardBounded,
    KbsBackwardBlowup,
    KbsForwardAbsorbing,
    KbsLifespanSweep,
    NlsBackwardGrowth,
    CglBackwardRiccati,
    HypernsDecay,
    HypernsEigenflow,
    CnoidalTravel,
    CnoidalEigen,
    ModulationDamped,
    ModulationViscous,
    ModulationBbm,
    SpectrumReport,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 14] = [
        ScenarioId::KdvBackwardBounded,
        ScenarioId::KbsBackwardBlowup,
        ScenarioId::KbsForwardAbsorbing,
        ScenarioId::KbsLifespanSweep,
        ScenarioId::NlsBackwardGrowth,
        ScenarioId::CglBackwardRiccati,
        ScenarioId::HypernsDecay,
        ScenarioId::HypernsEigenflow,
        ScenarioId::CnoidalTravel,
        ScenarioId::CnoidalEigen,
        ScenarioId::ModulationDamped,
        ScenarioId::ModulationViscous,
        ScenarioId::ModulationBbm,
        ScenarioId::SpectrumReport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::KdvBackwardBounded => "kdv-backward-bounded",
            ScenarioId::KbsBackwardBlowup => "kbs-backward-blowup",
            ScenarioId::KbsForwardAbsorbing => "kbs-forward-absorbing",
            ScenarioId::KbsLifespanSweep => "kbs-lifespan-sweep",
            ScenarioId::NlsBackwardGrowth => "nls-backward-growth",
            ScenarioId::CglBackwardRiccati => "cgl-backward-riccati",
            ScenarioId::HypernsDecay => "hyperns-decay",
            ScenarioId::HypernsEigenflow => "hyperns-eigenflow",
            ScenarioId::CnoidalTravel => "cnoidal-travel",
            ScenarioId::CnoidalEigen => "cnoidal-eigen",
            ScenarioId::ModulationDamped => "modulation-damped",
            ScenarioId::ModulationViscous => "modulation-viscous",
            ScenarioId::ModulationBbm => "modulation-bbm",
            ScenarioId::SpectrumReport => "spectrum-report",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| LabError::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub length: f64,
    /// Second axis for 2D scenarios; defaults to a square grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length1: Option<f64>,
}

/// One Fourier mode of a real forcing, `c cos(jx·2π/L) + s sin(jx·2π/L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingMode {
    pub mode: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_cgl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_cgl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PerturbedKdvKind>,
    /// Time direction of the modulation scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forcing: Vec<ForcingMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// Random field on modes `1 ≤ |m| ≤ modes` with L² norm `amplitude`.
    Random,
    /// `amplitude · sin(2πx/L)`.
    Sine,
    /// Zero-mean cnoidal wave of parameter `model.m0`.
    Cnoidal,
    /// Vorticity `amplitude · cos(2π·modes·x/L)`.
    Eigenflow,
    /// Constant plus a random perturbation of relative L² size `perturbation`,
    /// rescaled to L² norm `amplitude`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub perturbation: f64,
    /// Initial amplitudes of multi-trajectory scenarios, one run each.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub amplitudes: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_modes() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeConfig {
    pub alpha: f64,
    /// Gauge width; `None` couples it to the dissipation with the empirical
    /// Poincaré constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub k_lo: f64,
    pub k_hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_slope: Option<f64>,
    #[serde(default = "default_slope_tolerance")]
    pub tolerance: f64,
}

fn default_slope_tolerance() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub grid: GridConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, LabError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        ScenarioConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if self.grid.n < 4 || !self.grid.n.is_power_of_two() {
            return Err(LabError::Config(format!("grid.n = {} must be a power of two ≥ 4", self.grid.n)));
        }
        if !(self.grid.length > 0.0) {
            return Err(LabError::Config("grid.length must be positive".into()));
        }
        self.integrator
            .validate()
            .map_err(|e| LabError::Config(format!("integrator: {e}")))?;
        if self.initial.amplitude < 0.0 {
            return Err(LabError::Config("initial.amplitude must be ≥ 0".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let v = serde_json::to_value(&c).expect("config is serializable");
        let text = serde_json::to_string(&v).expect("json value");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Set a numeric field by dotted path, e.g. `model.nu` or `grid.length`.
    pub fn with_param(&self, path: &str, value: f64) -> Result<ScenarioConfig, LabError> {
        let mut v = serde_json::to_value(self).expect("config is serializable");
        let parts: Vec<&str> = path.split('.').collect();
        let (leaf, parents) = parts.split_last().expect("split yields at least one part");
        let mut cur = &mut v;
        for p in parents {
            cur = cur
                .as_object_mut()
                .ok_or_else(|| LabError::Config(format!("`{path}` is not a parameter path")))?
                .entry((*p).to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
        let num = if is_integer_field(leaf) {
            serde_json::Value::from(value.round() as u64)
        } else {
            serde_json::Value::from(value)
        };
        cur.as_object_mut()
            .ok_or_else(|| LabError::Config(format!("`{path}` is not a parameter path")))?
            .insert((*leaf).to_string(), num);
        let cfg: ScenarioConfig =
            serde_json::from_value(v).map_err(|e| LabError::Config(format!("{path}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn required(&self, name: &str, v: Option<f64>) -> Result<f64, LabError> {
        v.ok_or_else(|| LabError::Config(format!("{}: model.{name} is required", self.scenario)))
    }
}

fn is_integer_field(name: &str) -> bool {
    matches!(name, "n" | "n1" | "modes" | "seed" | "record_every" | "max_steps" | "checkpoint_every")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
scenario = "kdv-backward-bounded"
seed = 3

[grid]
n = 64
length = 6.283185307179586

[model]
beta = 1.0
gamma = 1.0
forcing = [{ mode = 1, sin = 0.5 }]

[initial]
kind = "random"
amplitude = 3.0

[integrator]
dt0 = 0.01
t_end = 1.0
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ScenarioConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.scenario, ScenarioId::KdvBackwardBounded);
        assert_eq!(c.model.forcing[0].sin, 0.5);
        let back = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = SAMPLE.replace("beta = 1.0", "beta = 1.0\nbogus = 2.0");
        assert!(matches!(ScenarioConfig::from_toml(&bad), Err(LabError::Config(_))));
        let bad = SAMPLE.replace("kdv-backward-bounded", "nope");
        assert!(ScenarioConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn hash_tracks_meaningful_fields() {
        let c = ScenarioConfig::from_toml(SAMPLE).unwrap();
        let mut d = c.clone();
        d.output_dir = Some("elsewhere".into());
        assert_eq!(c.hash(), d.hash());
        let e = c.with_param("model.beta", 1.5).unwrap();
        assert_ne!(c.hash(), e.hash());
        let same = c.with_param("model.beta", 1.0).unwrap();
        assert_eq!(c.hash(), same.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn dotted_parameters() {
        let c = ScenarioConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.with_param("grid.n", 128.0).unwrap().grid.n, 128);
        assert_eq!(c.with_param("model.nu", 0.5).unwrap().model.nu, Some(0.5));
        assert!(c.with_param("grid.n", 100.0).is_err());
        assert!(c.with_param("model.unknown", 1.0).is_err());
    }

    #[test]
    fn scenario_names_round_trip() {
        for id in ScenarioId::ALL {
            assert_eq!(id.as_str().parse::<ScenarioId>().unwrap(), id);
        }
    }
}
