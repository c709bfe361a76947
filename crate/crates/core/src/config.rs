//! Top-level run configuration shared by every command, and its hash.

use crate::affordance::SensingParams;
use crate::bevgrid::GridConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::learner::SacConfig;
use crate::reward::{RewardConfig, RewardPreset};
use crate::scenario::{RouteRequest, ScenarioConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeParams {
    pub max_steps: u64,
    pub replan_on_destination: bool,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self { max_steps: e.max_steps, replan_on_destination: e.replan_on_destination }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Number of fixed routes drawn when `route_list` is absent.
    pub routes: usize,
    pub repetitions: usize,
    /// Seed for route selection and per-episode seeds.
    pub seed: u64,
    pub route_list: Option<Vec<RouteRequest>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { routes: 10, repetitions: 3, seed: 0, route_list: None }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::config("eval.repetitions", "must be >= 1"));
        }
        match &self.route_list {
            Some(l) if l.is_empty() => Err(Error::config("eval.route_list", "must not be empty")),
            None if self.routes == 0 => Err(Error::config("eval.routes", "must be >= 1")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// When set, replaces `reward.toggles`.
    pub preset: Option<RewardPreset>,
    pub scenario: ScenarioConfig,
    pub sensing: SensingParams,
    pub reward: RewardConfig,
    pub env: EpisodeParams,
    pub sac: SacConfig,
    pub eval: EvalConfig,
    pub bev: GridConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            preset: None,
            scenario: ScenarioConfig::default(),
            sensing: SensingParams::default(),
            reward: RewardConfig::default(),
            env: EpisodeParams::default(),
            sac: SacConfig::default(),
            eval: EvalConfig::default(),
            bev: GridConfig::default(),
        }
    }
}

/// Maps a serde error message onto the offending field where serde names it.
fn parse_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
        .unwrap_or("config");
    Error::config(field, format!("{msg}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(parse_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config().validate()?;
        self.sac.validate()?;
        self.eval.validate()?;
        self.bev.validate()
    }

    pub fn effective_reward(&self) -> RewardConfig {
        let mut r = self.reward.clone();
        if let Some(p) = self.preset {
            r.toggles = p.toggles();
        }
        r
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            scenario: self.scenario.clone(),
            sensing: self.sensing.clone(),
            reward: self.effective_reward(),
            max_steps: self.env.max_steps,
            replan_on_destination: self.env.replan_on_destination,
        }
    }

    /// SHA-256 over the canonical JSON of everything that affects results.
    /// The output directory is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.sac.lr, 3e-4);
        assert_eq!(c.reward.w_l1, 1.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_json(r#"{"sac": {"learning_rate": 0.1}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "learning_rate"), "{err}");
    }

    #[test]
    fn invalid_value_is_named() {
        let err = RunConfig::from_json(r#"{"sac": {"gamma": 1.5}}"#).unwrap_err();
        assert!(err.is_config(), "{err}");
        let err = RunConfig::from_json(r#"{"eval": {"repetitions": 0}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "eval.repetitions"));
    }

    #[test]
    fn preset_overrides_toggles() {
        let c = RunConfig::from_json(r#"{"preset": "fully-sparse"}"#).unwrap();
        assert_eq!(c.env_config().reward.toggles, RewardPreset::FullySparse.toggles());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::default();
        let b = RunConfig { output_dir: Some("x".into()), ..a.clone() };
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
        assert_eq!(RunConfig::from_json(&a.to_json()).unwrap().hash(), a.hash());
    }
}
