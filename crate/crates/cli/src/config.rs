//! Run configuration: a TOML file, then `--set key=value` overrides, then the
//! dedicated flags. The effective configuration is echoed into every report.

use std::path::{Path, PathBuf};

use hip_core::action::InverseTrainConfig;
use hip_core::env::EnvParams;
use hip_core::pipeline::{PipelineConfig, PlannerMode, DEFAULT_SWEEP};
use hip_core::task::{GroundingTrainConfig, LlmClientConfig};
use hip_core::visual::{DenoiserTrainConfig, FeasibilityTrainConfig, GuidanceConfig, NoiseSchedule, ScheduleParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Training tasks rolled out by the expert.
    pub n_tasks: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n_tasks: 1000 }
    }
}

/// Per-component training settings. Each `seed` is mixed with the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub grounding: GroundingTrainConfig,
    pub denoiser: DenoiserTrainConfig,
    pub feasibility: FeasibilityTrainConfig,
    pub inverse: InverseTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_tasks: usize,
    pub seeds: Vec<u64>,
    pub modes: Vec<PlannerMode>,
    pub max_subgoals: usize,
    /// Only evaluate tasks that need at least two subgoals.
    pub multi_subgoal: bool,
    pub replan_every_step: bool,
    pub stop_when_unreachable: bool,
    pub sweep: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            n_tasks: 200,
            seeds: vec![0, 1],
            modes: vec![PlannerMode::Full],
            max_subgoals: p.max_subgoals,
            multi_subgoal: false,
            replan_every_step: p.replan_every_step,
            stop_when_unreachable: p.stop_when_unreachable,
            sweep: DEFAULT_SWEEP.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self::under(Path::new("runs"))
    }
}

impl PathsConfig {
    pub fn under(root: &Path) -> Self {
        Self {
            data_dir: root.join("data"),
            checkpoint_dir: root.join("checkpoints"),
            output_dir: root.join("reports"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub master_seed: u64,
    pub env: EnvParams,
    pub schedule: ScheduleParams,
    pub guidance: GuidanceConfig,
    pub data: DataConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
    pub llm: LlmClientConfig,
    pub paths: PathsConfig,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn check_training(name: &str, epochs: usize, lr: f64, wd: f64, batch: usize) -> Result<(), CliError> {
    if epochs == 0 || batch == 0 {
        return Err(invalid(format!("train.{name}: epochs and batch must be positive")));
    }
    if !(lr > 0.0 && lr.is_finite()) || !(wd >= 0.0 && wd.is_finite()) {
        return Err(invalid(format!("train.{name}: lr must be positive and weight_decay nonnegative")));
    }
    Ok(())
}

impl Config {
    /// Parses and validates a TOML document, applying `overrides` first.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| invalid(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.env.validate().map_err(|e| invalid(e.to_string()))?;
        NoiseSchedule::from_params(&self.schedule).map_err(|e| invalid(e.to_string()))?;
        self.guidance.validate().map_err(|e| invalid(e.to_string()))?;
        if self.master_seed > i64::MAX as u64 {
            return Err(invalid("master_seed must fit in a signed 64-bit integer"));
        }
        if self.data.n_tasks == 0 {
            return Err(invalid("data.n_tasks must be at least 1"));
        }
        let t = &self.train;
        check_training("grounding", t.grounding.epochs, t.grounding.lr, t.grounding.weight_decay, t.grounding.batch)?;
        check_training("denoiser", t.denoiser.epochs, t.denoiser.lr, t.denoiser.weight_decay, t.denoiser.batch)?;
        check_training("feasibility", t.feasibility.epochs, t.feasibility.lr, t.feasibility.weight_decay, t.feasibility.batch)?;
        check_training("inverse", t.inverse.epochs, t.inverse.lr, t.inverse.weight_decay, t.inverse.batch)?;
        let d = &t.denoiser;
        if !(d.drop_prob >= 0.0 && d.goal_token_prob >= 0.0 && d.drop_prob + d.goal_token_prob < 1.0) {
            return Err(invalid("train.denoiser: token probabilities must be nonnegative and sum below 1"));
        }
        let e = &self.eval;
        if e.n_tasks == 0 || e.seeds.is_empty() || e.modes.is_empty() || e.max_subgoals == 0 {
            return Err(invalid("eval: n_tasks, seeds, modes and max_subgoals must be nonempty"));
        }
        if let Some(v) = e.sweep.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("eval.sweep: omega_prime values must be nonnegative, got {v}")));
        }
        if self.llm.enabled && self.llm.endpoint.trim().is_empty() {
            return Err(invalid("llm.endpoint is required when llm.enabled is set"));
        }
        Ok(())
    }

    /// The effective configuration as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            guidance: self.guidance,
            max_subgoals: self.eval.max_subgoals,
            replan_every_step: self.eval.replan_every_step,
            stop_when_unreachable: self.eval.stop_when_unreachable,
            llm: self.llm.clone(),
        }
    }
}

/// Parses `a.b.c=value`, where the value is read as a TOML literal and, failing
/// that, as a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("override key {key:?} is malformed")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, path) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| invalid(format!("override key {key:?} crosses a non-table value")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Mixes the master seed with a per-purpose salt.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
