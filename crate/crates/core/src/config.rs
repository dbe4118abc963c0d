//! Run configuration. One TOML file holds the problem selector and every
//! parameter block; dotted-path overrides edit the parsed tree before
//! deserialization so they behave exactly like editing the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{UpdaterConfig, UpdaterKind};
use crate::harness::CampaignConfig;
use crate::mdh::{HypothesisRewardKind, ResolutionSpec};
use crate::problems::sda::SdaParams;
use crate::problems::vdp::VdpParams;
use crate::solver::SolverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
    #[error("override {key:?}: {detail}")]
    Override { key: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    VdpTrack,
    Sda,
    LinearGaussianBench,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_reward_kind() -> HypothesisRewardKind {
    HypothesisRewardKind::ResolutionTime
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Episode length in decision epochs; None takes the problem default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default = "default_reward_kind")]
    pub reward_kind: HypothesisRewardKind,
    #[serde(default)]
    pub campaign: CampaignConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<ResolutionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updater: Option<UpdaterConfig>,
    #[serde(default)]
    pub vdp: VdpParams,
    #[serde(default)]
    pub sda: SdaParams,
}

impl RunConfig {
    pub fn resolved_horizon(&self) -> usize {
        self.horizon.unwrap_or(match self.problem {
            ProblemKind::VdpTrack => 30,
            ProblemKind::Sda => self.sda.horizon_steps(),
            ProblemKind::LinearGaussianBench => 20,
        })
    }

    pub fn resolved_resolution(&self) -> ResolutionSpec {
        self.resolution.unwrap_or(match self.problem {
            ProblemKind::VdpTrack => ResolutionSpec {
                epsilon: 0.2,
                deadline: 30,
            },
            ProblemKind::Sda => ResolutionSpec {
                epsilon: 0.2,
                deadline: self.sda.deadline_steps(),
            },
            ProblemKind::LinearGaussianBench => ResolutionSpec {
                epsilon: 0.2,
                deadline: 20,
            },
        })
    }

    pub fn resolved_updater(&self) -> UpdaterConfig {
        self.updater.clone().unwrap_or_else(|| match self.problem {
            ProblemKind::VdpTrack => UpdaterConfig {
                kind: UpdaterKind::Particle,
                ..UpdaterConfig::unscented()
            },
            ProblemKind::Sda | ProblemKind::LinearGaussianBench => UpdaterConfig::unscented(),
        })
    }

    /// Copy with every defaulted block made explicit; this is what gets
    /// echoed next to the artifacts.
    pub fn effective(&self) -> RunConfig {
        let mut out = self.clone();
        out.horizon = Some(self.resolved_horizon());
        out.resolution = Some(self.resolved_resolution());
        out.updater = Some(self.resolved_updater());
        out
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.campaign.validate().map_err(ConfigError::Invalid)?;
        self.solver
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("solver: {e}")))?;
        if let Some(u) = &self.updater {
            u.validate()
                .map_err(|e| ConfigError::Invalid(format!("updater: {e}")))?;
        }
        if let Some(r) = &self.resolution {
            if !(r.epsilon > 0.0 && r.epsilon < 1.0) {
                return Err(ConfigError::Invalid(
                    "resolution.epsilon: must lie in (0, 1)".into(),
                ));
            }
            if r.deadline == 0 {
                return Err(ConfigError::Invalid(
                    "resolution.deadline: must be at least 1".into(),
                ));
            }
        }
        if let Some(h) = self.horizon {
            if h == 0 {
                return Err(ConfigError::Invalid("horizon: must be at least 1".into()));
            }
        }
        match self.problem {
            ProblemKind::VdpTrack => self.vdp.validate().map_err(ConfigError::Invalid)?,
            ProblemKind::Sda => self.sda.validate().map_err(ConfigError::Invalid)?,
            ProblemKind::LinearGaussianBench => {}
        }
        Ok(())
    }
}

/// `key.path=value`; the value is parsed as a TOML literal, falling back to
/// a bare string.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override {
        key: spec.to_string(),
        detail: "expected key.path=value".into(),
    })?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(ConfigError::Override {
            key: spec.to_string(),
            detail: "empty key".into(),
        });
    }
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        let table = cur.as_table_mut().ok_or_else(|| ConfigError::Override {
            key: key.to_string(),
            detail: format!("{part} is not a table"),
        })?;
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = cur.as_table_mut().ok_or_else(|| ConfigError::Override {
        key: key.to_string(),
        detail: "parent is not a table".into(),
    })?;
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut value: toml::Value =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    for ov in overrides {
        apply_override(&mut value, ov)?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(value)
        .map_err(|e| ConfigError::Parse(format!("{}: {}", e.path(), e.inner().message())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_config(&text, overrides)
}
