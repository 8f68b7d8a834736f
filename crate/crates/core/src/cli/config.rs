use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{GaugeSpec, RhoGrid, ScenarioSpec};
use crate::certificates::Check;
use crate::error::{LabError, Result};
use crate::flow::FlowConfig;
use crate::picard::{parse_rational, DivisorClass, SurfaceKind};

/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "KAHLER_LAB_OUT";
pub const DEFAULT_OUT: &str = "runs";

/// A complete, reproducible description of one run.
///
/// Every field has a default, so an empty file is the divisorial run on
/// `F1` with `A = 4H - E`:
///
/// ```toml
/// seed = 0
/// checks = ["sandwich", "v-upper", "v-lower", "laplacian-upper", "metric-equivalence", "class-tracking"]
///
/// [scenario]
/// surface = "F1"          # P2, F<k> or T2
/// ample = ["4", "-1"]     # rationals "p/q" in the (E∞, E) basis; (H) on P2 and (Θ) on T2
///
/// [grid]
/// R = 15.0
/// N = 2048
///
/// [flow]
/// t_end = 1.193147        # defaults to T + 0.5, or 5 when no singularity occurs
/// scheme = "auto"
///
/// [outputs]
/// csv = true
/// plots = true
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub grid: GridSection,
    pub flow: FlowSection,
    pub checks: Vec<Check>,
    pub outputs: OutputSection,
    /// Seeds randomized sweeps; recorded so reruns are identical.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSection::default(),
            grid: GridSection::default(),
            flow: FlowSection::default(),
            checks: Check::DEFAULT.to_vec(),
            outputs: OutputSection::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub surface: String,
    pub ample: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeSpec>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            surface: "F1".into(),
            ample: vec!["4".into(), "-1".into()],
            gauge: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "R")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub nodes: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            half_width: 15.0,
            nodes: 2048,
        }
    }
}

/// [`FlowConfig`] with `t_end` left open until the scenario is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub dt_init: f64,
    pub dt_min: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub positivity_floor: f64,
    pub scheme: crate::flow::Scheme,
    pub snapshot_times: Vec<f64>,
    pub max_steps: usize,
    pub max_substeps: u64,
    pub max_log_change: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        let d = FlowConfig::default();
        Self {
            t_end: None,
            dt_init: d.dt_init,
            dt_min: d.dt_min,
            newton_tol: d.newton_tol,
            newton_max_iter: d.newton_max_iter,
            positivity_floor: d.positivity_floor,
            scheme: d.scheme,
            snapshot_times: d.snapshot_times,
            max_steps: d.max_steps,
            max_substeps: d.max_substeps,
            max_log_change: d.max_log_change,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Output root; `KAHLER_LAB_OUT`, then `runs`, when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Snapshot cadence in flow time; `null` keeps only probe and end states.
    pub snapshot_every: Option<f64>,
    pub csv: bool,
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            snapshot_every: FlowConfig::default().snapshot_every,
            csv: true,
            plots: true,
        }
    }
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec> {
        let surface: SurfaceKind = self.scenario.surface.parse()?;
        let coeffs = self
            .scenario
            .ample
            .iter()
            .map(|s| parse_rational(s).map_err(LabError::Config))
            .collect::<Result<Vec<_>>>()?;
        let grid = RhoGrid::new(self.grid.half_width, self.grid.nodes)?;
        let mut spec = ScenarioSpec::new(surface, DivisorClass::new(coeffs), grid);
        spec.gauge = self.scenario.gauge.clone();
        Ok(spec)
    }

    /// The flow settings, with `t_end` resolved against the singular time.
    pub fn flow_config(&self, singular_time: f64) -> FlowConfig {
        let f = &self.flow;
        let t_end = f.t_end.unwrap_or(if singular_time.is_finite() {
            singular_time + 0.5
        } else {
            5.0
        });
        FlowConfig {
            dt_init: f.dt_init,
            dt_min: f.dt_min,
            t_end,
            newton_tol: f.newton_tol,
            newton_max_iter: f.newton_max_iter,
            positivity_floor: f.positivity_floor,
            scheme: f.scheme,
            snapshot_every: self.outputs.snapshot_every,
            snapshot_times: f.snapshot_times.clone(),
            max_steps: f.max_steps,
            max_substeps: f.max_substeps,
            max_log_change: f.max_log_change,
        }
    }

    /// Content hash of everything that affects the results; the output
    /// directory is excluded so moving the root keeps run names.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.outputs.dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// `outputs.dir`, else `$KAHLER_LAB_OUT`, else `./runs`.
    pub fn out_root(&self) -> PathBuf {
        self.outputs
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_root().join(format!("run-{}", self.hash()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("[grid]\nM = 3").is_err());
        assert!(RunConfig::parse("[flow]\ndt = 0.1").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.scenario.ample = vec!["7/2".into(), "-1".into()];
        c.flow.t_end = Some(0.3);
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn small_grids_are_rejected() {
        let c = RunConfig::parse("[grid]\nN = 10").unwrap();
        assert!(matches!(c.scenario_spec(), Err(LabError::InvalidGrid(_))));
    }

    #[test]
    fn hash_ignores_output_root() {
        let mut c = RunConfig::default();
        let h = c.hash();
        c.outputs.dir = Some("/elsewhere".into());
        assert_eq!(c.hash(), h);
        c.seed = 1;
        assert_ne!(c.hash(), h);
    }
}
