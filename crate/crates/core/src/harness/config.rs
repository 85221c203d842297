//! Experiment configuration: one TOML tree, unknown keys rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{ModelConfig, TrainConfig};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::planner::{PlannerConfig, SafetySetup};
use crate::safety::{BoxConstraint, SafetyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Probabilistic ensemble trained on collected transitions.
    #[default]
    Learned,
    /// Noisy copies of the environment's own dynamics.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub ensemble_size: usize,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub min_logvar: f64,
    pub max_logvar: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            kind: ModelKind::default(),
            ensemble_size: m.ensemble_size,
            num_layers: m.num_layers,
            hidden_size: m.hidden_size,
            min_logvar: m.min_logvar,
            max_logvar: m.max_logvar,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            ensemble_size: self.ensemble_size,
            num_layers: self.num_layers,
            hidden_size: self.hidden_size,
            min_logvar: self.min_logvar,
            max_logvar: self.max_logvar,
        }
    }
}

/// One box dimension; dimensions not listed are unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBound {
    pub dim: usize,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetySection {
    pub enabled: bool,
    pub delta: f64,
    pub c_max: f64,
    /// Violation box; empty means the environment's own constraint.
    #[serde(rename = "box")]
    pub bounds: Vec<BoxBound>,
}

impl Default for SafetySection {
    fn default() -> Self {
        let s = SafetyConfig::default();
        Self {
            enabled: s.enabled,
            delta: s.delta,
            c_max: s.c_max,
            bounds: Vec::new(),
        }
    }
}

impl SafetySection {
    pub fn safety_config(&self) -> SafetyConfig {
        SafetyConfig {
            enabled: self.enabled,
            delta: self.delta,
            c_max: self.c_max,
        }
    }

    /// Planner-side constraint, or `None` when nothing is to be enforced.
    pub fn setup(&self, state_dim: usize, env_box: Option<BoxConstraint>) -> Result<Option<SafetySetup>> {
        let cfg = self.safety_config();
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        let bx = if self.bounds.is_empty() {
            env_box
        } else {
            let mut iv = vec![None; state_dim];
            for b in &self.bounds {
                if b.dim >= state_dim {
                    return Err(Error::Config(format!("safety box dim {} out of range for state dimension {state_dim}", b.dim)));
                }
                iv[b.dim] = Some((b.low, b.high));
            }
            Some(BoxConstraint::new(iv).map_err(|e| Error::Config(e.to_string()))?)
        };
        match bx {
            Some(bx) if bx.dim() == state_dim => Ok(Some(SafetySetup { bx, cfg })),
            Some(_) => Err(Error::Config("safety box dimension does not match the environment".into())),
            None if self.enabled => Err(Error::Config("safety is enabled but no box is configured".into())),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub iterations: usize,
    pub rollouts_per_iter: usize,
    pub rollout_length: usize,
    pub fit_epochs: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            iterations: 10,
            rollouts_per_iter: 5,
            rollout_length: 80,
            fit_epochs: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Episodes per evaluation seed.
    pub episodes: usize,
    /// Number of evaluation seeds, `seed`, `seed + 1`, ...
    pub seeds: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { episodes: 50, seeds: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: String,
    pub env: EnvConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub planner: PlannerConfig,
    pub safety: SafetySection,
    pub schedule: Schedule,
    pub evaluation: EvaluationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: "runs/default".into(),
            env: EnvConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            planner: PlannerConfig::default(),
            safety: SafetySection::default(),
            schedule: Schedule::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_value(toml::from_str(text).map_err(config_err)?)
    }

    pub fn from_toml_value(value: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(value).try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path`, apply `key=value` overrides, then parse.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut table: toml::Table = toml::from_str(&text).map_err(config_err)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_toml_value(table)
    }

    pub fn to_toml_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(config_err)
    }

    /// Apply overrides to an already parsed config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut table = self.to_toml_table()?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_toml_value(table)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| match e {
            Error::InvalidInput(m) => Error::Config(m),
            other => other,
        });
        wrap(self.env.validate())?;
        wrap(self.model.model_config().validate())?;
        wrap(self.planner.validate())?;
        wrap(self.safety.safety_config().validate())?;
        let s = &self.schedule;
        if s.rollouts_per_iter == 0 || s.rollout_length == 0 || s.fit_epochs == 0 {
            return Err(Error::Config("schedule counts must be at least 1".into()));
        }
        if self.evaluation.episodes == 0 || self.evaluation.seeds == 0 {
            return Err(Error::Config("evaluation.episodes and evaluation.seeds must be at least 1".into()));
        }
        if !(self.train.lr > 0.0) || self.train.batch_size == 0 {
            return Err(Error::Config("train.lr must be positive and train.batch_size at least 1".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse `value` as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set a dotted `key=value` pair inside `table`, creating sub-tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_tables() {
        let c = ExperimentConfig::default();
        assert_eq!(c.schedule.rollouts_per_iter, 5);
        assert_eq!(c.schedule.rollout_length, 80);
        assert_eq!(c.schedule.fit_epochs, 25);
        assert_eq!(c.planner.horizon, 30);
        assert_eq!(c.planner.num_samples, 128);
        assert_eq!(c.model.hidden_size, 400);
        assert_eq!(c.train.batch_size, 512);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("[planner]\nhorizn = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
        assert!(ExperimentConfig::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn parses_a_full_tree() {
        let text = r#"
seed = 4
output_dir = "out"
[env]
id = "noisy_integrator"
velocity_gate = 0.6
[model]
kind = "ground_truth"
ensemble_size = 5
[planner]
horizon = 10
w_aleatoric = 0.5
aleatoric_measure = "entropy"
[safety]
enabled = true
delta = 0.05
[[safety.box]]
dim = 2
low = 0.3
high = inf
[schedule]
iterations = 2
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.seed, 4);
        assert!(matches!(c.env, EnvConfig::NoisyIntegrator(_)));
        assert_eq!(c.model.kind, ModelKind::GroundTruth);
        assert_eq!(c.safety.bounds[0].high, f64::INFINITY);
        let setup = c.safety.setup(3, None).unwrap().unwrap();
        assert_eq!(setup.bx.intervals()[2], Some((0.3, f64::INFINITY)));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let base = ExperimentConfig::default();
        let c = base
            .with_overrides(&["planner.w_epistemic=0.05".into(), "seed=9".into(), "env.wind_max=3".into()])
            .unwrap();
        assert_eq!(c.planner.w_epistemic, 0.05);
        assert_eq!(c.seed, 9);
        match c.env {
            EnvConfig::BridgeMaze(b) => assert_eq!(b.wind_max, 3.0),
            _ => panic!("env changed kind"),
        }
        assert!(base.with_overrides(&["planner.nope=1".into()]).is_err());
        assert!(base.with_overrides(&["no_equals".into()]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.planner.w_aleatoric = 0.1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn enabled_safety_needs_a_box() {
        let s = SafetySection {
            enabled: true,
            ..Default::default()
        };
        assert!(s.setup(4, None).is_err());
        assert!(SafetySection::default().setup(4, None).unwrap().is_none());
    }

    #[test]
    fn zero_schedule_counts_are_config_errors() {
        let err = ExperimentConfig::default().with_overrides(&["schedule.fit_epochs=0".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
