use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::GeneratorSpec;
use crate::error::{config, Result};
use crate::marl::{MarlConfig, MeetAtGoal};
use crate::naming::GameConfig;
use crate::temporal::TemporalMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NamingGame,
    SignalingGame,
    Marl,
    Temporal,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

/// Where the naming game's observations come from: a dataset file or the
/// built-in generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorSpec>,
}

/// A message MDP file, or the meet-at-goal benchmark (the default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meet_at_goal: Option<MeetAtGoal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalingSettings {
    #[serde(default = "four")]
    pub n_inputs: usize,
    #[serde(default = "four")]
    pub n_messages: usize,
    /// Absent for the MI objective, otherwise the ELBO weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn four() -> usize {
    4
}

fn default_steps() -> usize {
    3000
}

fn default_lr() -> f64 {
    5.0
}

fn default_init_scale() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalSettings {
    pub rounds: usize,
    #[serde(default)]
    pub mode: TemporalMode,
    #[serde(default)]
    pub learn: bool,
    pub n_signs: usize,
    pub n_states: usize,
    pub n_features: usize,
    #[serde(default = "one")]
    pub alpha_transition: f64,
    #[serde(default = "default_alpha_theta")]
    pub alpha_theta: f64,
    /// Sequence dataset file; when absent, sequences are generated from
    /// random models with the sizes below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default = "ten")]
    pub n_objects: usize,
    #[serde(default = "five")]
    pub horizon: usize,
    #[serde(default = "three")]
    pub tokens: u32,
}

fn one() -> f64 {
    1.0
}

fn default_alpha_theta() -> f64 {
    crate::pgm::DEFAULT_ALPHA_THETA
}

fn ten() -> usize {
    10
}

fn five() -> usize {
    5
}

fn three() -> u32 {
    3
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A resolved experiment file.
///
/// Blocks that carry their own `seed` (`naming`, `marl`,
/// `dataset.generate`) inherit the top-level seed unless they set one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naming: Option<GameConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signaling: Option<SignalingSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marl: Option<MarlConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<TemporalSettings>,
}

const SEEDED_BLOCKS: [&[&str]; 3] = [&["naming"], &["marl"], &["dataset", "generate"]];

/// Parses `key.path=value`; the value is read as a TOML literal when it
/// parses as one and as a bare string otherwise.
pub fn parse_override(text: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| config(format!("override `{text}` is not of the form key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(config(format!("override key `{key}` has an empty segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

pub fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty override path");
    let mut cur = table;
    for seg in parents {
        let entry = cur
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config(format!("override path crosses non-table key `{seg}`")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn table_at<'a>(table: &'a mut toml::Table, path: &[&str]) -> Option<&'a mut toml::Table> {
    let mut cur = table;
    for seg in path {
        cur = cur.get_mut(*seg)?.as_table_mut()?;
    }
    Some(cur)
}

impl ExperimentConfig {
    /// Parses an experiment file, applies overrides (flags win), fills block
    /// seeds and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| config(format!("experiment file: {e}")))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            set_path(&mut table, &path, value)?;
        }
        if let Some(seed) = table.get("seed").cloned() {
            for block in SEEDED_BLOCKS {
                if let Some(t) = table_at(&mut table, block) {
                    t.entry("seed").or_insert(seed.clone());
                }
            }
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config(format!("experiment file: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let need = |present: bool, block: &str| {
            if present {
                Ok(())
            } else {
                Err(config(format!("kind {:?} needs a [{block}] block", self.kind)))
            }
        };
        match self.kind {
            ExperimentKind::NamingGame => {
                need(self.naming.is_some(), "naming")?;
                need(self.dataset.is_some(), "dataset")?;
                self.naming.as_ref().unwrap().validate()?;
                let ds = self.dataset.as_ref().unwrap();
                match (&ds.path, &ds.generate) {
                    (Some(p), None) => check_exists(p)?,
                    (None, Some(g)) => g.validate()?,
                    _ => return Err(config("[dataset] needs exactly one of path or generate")),
                }
            }
            ExperimentKind::SignalingGame => need(self.signaling.is_some(), "signaling")?,
            ExperimentKind::Marl => {
                need(self.marl.is_some(), "marl")?;
                self.marl.as_ref().unwrap().validate()?;
                if let Some(env) = &self.environment {
                    match (&env.mdp, &env.meet_at_goal) {
                        (Some(p), None) => check_exists(p)?,
                        (None, _) => {}
                        _ => return Err(config("[environment] takes mdp or meet_at_goal, not both")),
                    }
                }
            }
            ExperimentKind::Temporal => {
                need(self.temporal.is_some(), "temporal")?;
                if let Some(p) = &self.temporal.as_ref().unwrap().data {
                    check_exists(p)?;
                }
            }
            ExperimentKind::Verify => {}
        }
        Ok(())
    }

    /// Header embedded in every artifact.
    pub fn provenance(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": super::ARTIFACT_SCHEMA_VERSION,
            "seed": self.seed,
            "config": self,
        })
    }
}

fn check_exists(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(config(format!("referenced file {} does not exist", p.display())))
    }
}
