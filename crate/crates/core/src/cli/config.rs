//! Command configuration: a TOML file merged with command-line overrides.
//!
//! Every command reads a table from an optional file, applies `key=value`
//! overrides on top (dotted keys reach nested tables), then deserializes
//! into a typed config that rejects unknown keys.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::TrainerConfig;
use crate::baselines::KneeConfig;
use crate::corpus::{TargetSpec, TextModel};
use crate::reward::Objective;

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

/// Reads `path` (if any) and applies `overrides` in order.
pub fn load_table(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<toml::Table> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Ok(table)
}

/// Sets `a.b.c=value`. The value is parsed as TOML, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> anyhow::Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    set_value(table, key, value)
}

/// Sets a dotted key to a typed value, creating intermediate tables.
pub fn set_value(table: &mut toml::Table, key: &str, value: toml::Value) -> anyhow::Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| anyhow!("empty override key"))?;
    let mut node = table;
    for p in parts {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override key `{key}`: `{p}` is not a table"))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

pub fn from_table<T: DeserializeOwned>(table: toml::Table) -> anyhow::Result<T> {
    toml::Value::Table(table).try_into().context("invalid configuration")
}

pub fn write_effective<T: Serialize>(cfg: &T, dir: &Path) -> anyhow::Result<PathBuf> {
    let path = dir.join(EFFECTIVE_CONFIG);
    fs::write(&path, toml::to_string(cfg)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn default_targets() -> Vec<f64> {
    vec![0.7, 0.8, 0.9, 1.0]
}

fn default_batches() -> usize {
    100
}

pub fn target_specs(values: &[f64]) -> anyhow::Result<Vec<TargetSpec>> {
    if values.is_empty() {
        bail!("target list is empty");
    }
    let mut specs = values
        .iter()
        .map(|&v| TargetSpec::new(v).map_err(anyhow::Error::from))
        .collect::<anyhow::Result<Vec<_>>>()?;
    specs.sort();
    specs.dedup();
    Ok(specs)
}

fn require_dir(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.as_os_str().is_empty() {
        bail!("{what} path is not set");
    }
    if !path.is_dir() {
        bail!("{what} directory {} does not exist", path.display());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub output: PathBuf,
    pub seed: u64,
    pub topics: usize,
    pub docs: usize,
    pub prevalence: f64,
    /// Ranking quality rate; ignored when `aurc` is set.
    #[serde(default)]
    pub quality: Option<f64>,
    /// Desired expected AURC, converted to a quality rate.
    #[serde(default)]
    pub aurc: Option<f64>,
    #[serde(default)]
    pub overwrite: bool,
    #[serde(default = "default_prefix")]
    pub topic_prefix: String,
    #[serde(default = "default_tag")]
    pub run_tag: String,
    #[serde(default)]
    pub text: TextModel,
}

fn default_prefix() -> String {
    "syn".into()
}

fn default_tag() -> String {
    "synthetic".into()
}

impl SynthConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.quality.is_none() && self.aurc.is_none() {
            bail!("synth needs either `quality` or `aurc`");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrainConfig {
    data: PathBuf,
    output: PathBuf,
    seed: u64,
    #[serde(default = "default_batches")]
    batches: usize,
    #[serde(default)]
    objective: Objective,
    #[serde(default = "yes")]
    use_classifier: bool,
    #[serde(default = "default_targets")]
    targets: Vec<f64>,
    #[serde(default)]
    resume: Option<PathBuf>,
    #[serde(default)]
    trainer: toml::Table,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub data: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    pub batches: usize,
    pub objective: Objective,
    pub use_classifier: bool,
    pub targets: Vec<f64>,
    pub resume: Option<PathBuf>,
    /// Trainer settings; defaults depend on `use_classifier`. `trainer.seed`
    /// always equals `seed`.
    pub trainer: TrainerConfig,
}

impl TrainConfig {
    pub fn from_table(table: toml::Table) -> anyhow::Result<Self> {
        let raw: RawTrainConfig = from_table(table)?;
        let mut trainer = toml::Table::try_from(TrainerConfig::for_classifier(raw.use_classifier))?;
        for (k, v) in raw.trainer {
            trainer.insert(k, v);
        }
        let mut trainer: TrainerConfig = from_table(trainer).context("invalid [trainer] section")?;
        trainer.seed = raw.seed;
        let cfg = Self {
            data: raw.data,
            output: raw.output,
            seed: raw.seed,
            batches: raw.batches,
            objective: raw.objective,
            use_classifier: raw.use_classifier,
            targets: raw.targets,
            resume: raw.resume,
            trainer,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        require_dir(&self.data, "data")?;
        if let Some(r) = &self.resume {
            if !r.is_file() {
                bail!("resume checkpoint {} does not exist", r.display());
            }
        }
        target_specs(&self.targets)?;
        self.objective.validate()?;
        self.trainer.validate()?;
        if self.batches < 2 {
            bail!("batches must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Policy,
    Oracle,
    Knee,
    Tm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Policy => "policy",
            Method::Oracle => "oracle",
            Method::Knee => "knee",
            Method::Tm => "tm",
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Policy]
}

fn default_knee_prefix() -> usize {
    150
}

fn default_tm_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub data: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Batch count requested for the policy; defaults to the checkpoint's.
    #[serde(default)]
    pub batches: Option<usize>,
    #[serde(default = "default_targets")]
    pub targets: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Name written in the method column for the policy.
    #[serde(default = "default_policy_name")]
    pub policy_name: String,
    #[serde(default)]
    pub knee: KneeConfig,
    /// Ranks judged before the knee rule may fire (capped at the topic size).
    #[serde(default = "default_knee_prefix")]
    pub knee_prefix: usize,
    /// Relevant documents the target method samples for.
    #[serde(default = "default_tm_k")]
    pub tm_k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Also export a rank/recall curve per topic.
    #[serde(default)]
    pub curves: bool,
}

fn default_policy_name() -> String {
    "policy".into()
}

impl EvalConfig {
    pub fn from_table(table: toml::Table) -> anyhow::Result<Self> {
        let mut cfg: EvalConfig = from_table(table)?;
        cfg.methods.sort();
        cfg.methods.dedup();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        require_dir(&self.data, "data")?;
        if self.methods.is_empty() {
            bail!("no evaluation method requested");
        }
        if self.methods.contains(&Method::Policy) {
            match &self.checkpoint {
                Some(c) if c.is_file() => {}
                Some(c) => bail!("checkpoint {} does not exist", c.display()),
                None => bail!("method `policy` needs a checkpoint"),
            }
        }
        target_specs(&self.targets)?;
        if self.tm_k == 0 || self.knee_prefix == 0 {
            bail!("tm_k and knee_prefix must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_values_and_nest() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "seed=7").unwrap();
        apply_override(&mut t, "trainer.entropy_coef = 0.5").unwrap();
        apply_override(&mut t, "data=some/dir").unwrap();
        apply_override(&mut t, "targets=[0.7, 0.9]").unwrap();
        assert_eq!(t["seed"].as_integer(), Some(7));
        assert_eq!(t["trainer"]["entropy_coef"].as_float(), Some(0.5));
        assert_eq!(t["data"].as_str(), Some("some/dir"));
        assert_eq!(t["targets"].as_array().unwrap().len(), 2);
        assert!(apply_override(&mut t, "novalue").is_err());
        assert!(apply_override(&mut t, "seed.x=1").is_err());
    }

    fn train_table(dir: &Path) -> toml::Table {
        let mut t = toml::Table::new();
        apply_override(&mut t, &format!("data=\"{}\"", dir.display())).unwrap();
        apply_override(&mut t, "output=\"out\"").unwrap();
        apply_override(&mut t, "seed=3").unwrap();
        t
    }

    #[test]
    fn train_defaults_follow_classifier_switch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig::from_table(train_table(dir.path())).unwrap();
        assert_eq!(cfg.trainer.rollout_steps_per_env, 10);
        assert_eq!(cfg.trainer.entropy_coef, 0.1);
        assert_eq!(cfg.trainer.seed, 3);

        let mut t = train_table(dir.path());
        apply_override(&mut t, "use_classifier=false").unwrap();
        let cfg = TrainConfig::from_table(t).unwrap();
        assert_eq!(cfg.trainer.rollout_steps_per_env, 100);
        assert_eq!(cfg.trainer.entropy_coef, 0.001);

        let mut t = train_table(dir.path());
        apply_override(&mut t, "use_classifier=false").unwrap();
        apply_override(&mut t, "trainer.entropy_coef=0.05").unwrap();
        let cfg = TrainConfig::from_table(t).unwrap();
        assert_eq!(cfg.trainer.entropy_coef, 0.05);
        assert_eq!(cfg.trainer.rollout_steps_per_env, 100);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = train_table(dir.path());
        apply_override(&mut t, "learning_rte=0.1").unwrap();
        assert!(TrainConfig::from_table(t).is_err());
        let mut t = train_table(dir.path());
        apply_override(&mut t, "trainer.learning_rte=0.1").unwrap();
        assert!(TrainConfig::from_table(t).is_err());
    }

    #[test]
    fn missing_seed_or_data_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = train_table(dir.path());
        t.remove("seed");
        assert!(TrainConfig::from_table(t).is_err());
        let mut t = train_table(dir.path());
        apply_override(&mut t, "data=\"/nonexistent/grlstop\"").unwrap();
        assert!(TrainConfig::from_table(t).is_err());
    }

    #[test]
    fn eval_policy_needs_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = toml::Table::new();
        apply_override(&mut t, &format!("data=\"{}\"", dir.path().display())).unwrap();
        apply_override(&mut t, "output=\"out\"").unwrap();
        assert!(EvalConfig::from_table(t.clone()).is_err());
        apply_override(&mut t, "methods=[\"oracle\", \"knee\"]").unwrap();
        let cfg = EvalConfig::from_table(t).unwrap();
        assert_eq!(cfg.methods, vec![Method::Oracle, Method::Knee]);
    }
}
