use std::path::{Path, PathBuf};

use horizon_core::advantage::GammaSet;
use horizon_core::envs::EnvConfig;
use horizon_core::ppo::{PpoHyper, TrainerConfig};
use horizon_core::routing::ActorMode;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, LabError, Result};

/// Environment variable that replaces `output_dir` when set.
pub const OUTPUT_ROOT_VAR: &str = "HORIZON_OUTPUT_ROOT";

fn default_tau() -> f64 {
    horizon_core::ppo::DEFAULT_TAU
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// On-disk experiment description (TOML).
///
/// ```toml
/// actor_mode = "attention"
/// modes = ["attention", "error", "decoupled", "long_only"]
/// seeds = [0, 1, 2, 3, 4]
///
/// [env]
/// name = "mini_lander"
///
/// [ppo]
/// total_updates = 200
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub actor_mode: ActorMode,
    /// Modes covered by `sweep`; empty means `actor_mode` alone.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ActorMode>,
    #[serde(default)]
    pub gammas: GammaSet,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    #[serde(default)]
    pub ppo: PpoHyper,
}

impl TrainConfig {
    pub fn new(env: EnvConfig, actor_mode: ActorMode) -> Self {
        Self {
            actor_mode,
            modes: Vec::new(),
            gammas: GammaSet::default(),
            tau: default_tau(),
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            env,
            ppo: PpoHyper::default(),
        }
    }

    /// Two seeds, twenty updates on DistractorChain across all modes.
    pub fn smoke() -> Self {
        let mut cfg = Self::new(EnvConfig::distractor_chain(), ActorMode::Attention);
        cfg.modes = ActorMode::ALL.to_vec();
        cfg.seeds = vec![0, 1];
        cfg.ppo.total_updates = 20;
        cfg.ppo.rollout_length = 256;
        cfg.ppo.epochs = 4;
        cfg
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(LabError::MissingConfig(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|message| LabError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(io_err(path))
    }

    pub fn validate(&self) -> horizon_core::Result<()> {
        self.trainer_config(self.actor_mode).validate()?;
        self.env.build()?;
        Ok(())
    }

    pub fn sweep_modes(&self) -> Vec<ActorMode> {
        if self.modes.is_empty() {
            vec![self.actor_mode]
        } else {
            self.modes.clone()
        }
    }

    pub fn trainer_config(&self, mode: ActorMode) -> TrainerConfig {
        TrainerConfig {
            env: self.env.clone(),
            actor_mode: mode,
            gammas: self.gammas.clone(),
            ppo: self.ppo.clone(),
            tau: self.tau,
        }
    }

    /// The config of a single `(mode, seed)` run, as snapshotted next to its
    /// artifacts. The output directory is not part of it so that moved run
    /// trees still verify.
    pub fn resolved(&self, mode: ActorMode, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.actor_mode = mode;
        cfg.modes.clear();
        cfg.seeds = vec![seed];
        cfg.output_dir = PathBuf::from(".");
        cfg
    }

    /// `output_dir`, unless overridden by the environment.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => self.output_dir.clone(),
        }
    }
}
