//! Run configuration: a flat JSON object whose keys can each be overridden
//! from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::env::{RewardConfig, Td3Config};
use crate::error::{Error, Result};
use crate::graph::DEFAULT_K_CAP;
use crate::search::SearchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Offline,
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Whether the final CSV column holds ground-truth labels.
    pub has_labels: bool,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    /// Min-max scale every feature into `[0, 1]` before anything else.
    pub normalize: bool,
    pub label_proportion: f64,
    pub pi_eps: f64,
    pub pi_min_pts: f64,
    /// Maximum steps per episode.
    pub max_steps: usize,
    pub delta: f64,
    pub state_hidden: usize,
    pub actor_hidden: usize,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub policy_delay: usize,
    pub learning_rate: f64,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub buffer_capacity: usize,
    pub episodes: usize,
    /// Defaults to 3 offline and 6 online.
    pub layers: Option<usize>,
    /// Defaults to 0.25 offline and 0.0025 online.
    pub min_pts_cap_fraction: Option<f64>,
    /// DBSCAN invocations each agent may spend.
    pub max_rounds: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub alloc_eps: f64,
    pub alloc_min_pts: usize,
    /// Skip agent allocation and search the whole dataset with one agent.
    pub single_agent: bool,
    pub num_blocks: usize,
    pub k_cap: usize,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let td3 = Td3Config::default();
        let reward = RewardConfig::default();
        let search = SearchConfig::default();
        Self {
            dataset: PathBuf::new(),
            has_labels: true,
            mode: Mode::Offline,
            seeds: (0..10).collect(),
            normalize: true,
            label_proportion: search.label_proportion,
            pi_eps: search.pi_eps,
            pi_min_pts: search.pi_min_pts,
            max_steps: reward.max_steps,
            delta: reward.delta,
            state_hidden: search.state_hidden,
            actor_hidden: td3.hidden,
            gamma: td3.gamma,
            tau: td3.tau,
            batch_size: td3.batch_size,
            policy_delay: td3.policy_delay,
            learning_rate: td3.learning_rate,
            target_noise: td3.target_noise,
            noise_clip: td3.noise_clip,
            buffer_capacity: td3.buffer_capacity,
            episodes: search.episodes,
            layers: None,
            min_pts_cap_fraction: None,
            max_rounds: search.max_rounds,
            epsilon_start: search.epsilon_start,
            epsilon_end: search.epsilon_end,
            alloc_eps: 0.3,
            alloc_min_pts: 1,
            single_agent: false,
            num_blocks: 8,
            k_cap: DEFAULT_K_CAP,
            svg: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_value(value)?;
        // Relative dataset paths are taken relative to the config file.
        if cfg.dataset.is_relative() && !cfg.dataset.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                let joined = dir.join(&cfg.dataset);
                if joined.exists() || !cfg.dataset.exists() {
                    cfg.dataset = joined;
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces the keys present in `overrides`, a JSON object using the
    /// same flat key names.
    pub fn with_overrides(&self, overrides: Map<String, Value>) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        let obj = value.as_object_mut().expect("config serializes to an object");
        for (k, v) in overrides {
            if !obj.contains_key(&k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            obj.insert(k, v);
        }
        Self::from_value(value)
    }

    pub fn layers(&self) -> usize {
        self.layers.unwrap_or(match self.mode {
            Mode::Offline => 3,
            Mode::Online => 6,
        })
    }

    pub fn min_pts_cap_fraction(&self) -> f64 {
        self.min_pts_cap_fraction.unwrap_or(match self.mode {
            Mode::Offline => 0.25,
            Mode::Online => 0.0025,
        })
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            pi_eps: self.pi_eps,
            pi_min_pts: self.pi_min_pts,
            layers: self.layers(),
            episodes: self.episodes,
            min_pts_cap_fraction: self.min_pts_cap_fraction(),
            max_rounds: self.max_rounds,
            label_proportion: self.label_proportion,
            state_hidden: self.state_hidden,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            reward: RewardConfig {
                delta: self.delta,
                max_steps: self.max_steps,
            },
            td3: Td3Config {
                hidden: self.actor_hidden,
                gamma: self.gamma,
                tau: self.tau,
                batch_size: self.batch_size,
                policy_delay: self.policy_delay,
                learning_rate: self.learning_rate,
                target_noise: self.target_noise,
                noise_clip: self.noise_clip,
                buffer_capacity: self.buffer_capacity,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::Config("no dataset path given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.num_blocks == 0 {
            return Err(Error::Config("num_blocks must be positive".into()));
        }
        if self.k_cap == 0 {
            return Err(Error::Config("k_cap must be positive".into()));
        }
        if !(self.alloc_eps >= 0.0 && self.alloc_eps.is_finite()) || self.alloc_min_pts == 0 {
            return Err(Error::Config("allocation eps must be >= 0 and min_pts >= 1".into()));
        }
        self.search_config().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_by_mode() {
        let mut c = RunConfig::default();
        assert_eq!(c.layers(), 3);
        assert_eq!(c.min_pts_cap_fraction(), 0.25);
        c.mode = Mode::Online;
        assert_eq!(c.layers(), 6);
        assert_eq!(c.min_pts_cap_fraction(), 0.0025);
        let s = RunConfig::default().search_config();
        assert_eq!((s.max_rounds, s.episodes, s.td3.batch_size), (30, 15, 16));
        assert_eq!((s.label_proportion, s.reward.delta, s.td3.gamma), (0.2, 0.2, 0.1));
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = RunConfig::from_value(json!({"dataset": "x.csv", "max_rounds": 12})).unwrap();
        assert_eq!(c.max_rounds, 12);
        assert_eq!(c.episodes, 15);
        assert!(RunConfig::from_value(json!({"no_such_key": 1})).is_err());
    }

    #[test]
    fn overrides_replace_keys() {
        let base = RunConfig::default();
        let mut o = Map::new();
        o.insert("pi_eps".into(), json!(7.0));
        o.insert("mode".into(), json!("online"));
        let c = base.with_overrides(o).unwrap();
        assert_eq!(c.pi_eps, 7.0);
        assert_eq!(c.mode, Mode::Online);
        let mut bad = Map::new();
        bad.insert("bogus".into(), json!(1));
        assert!(matches!(base.with_overrides(bad), Err(Error::Config(_))));
    }

    #[test]
    fn validation_errors_are_config_errors() {
        let mut c = RunConfig {
            dataset: "d.csv".into(),
            ..RunConfig::default()
        };
        assert!(c.validate().is_ok());
        c.max_rounds = 0;
        let err = c.validate().unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("round budget must be positive"));
    }
}
