//! Run configuration: TOML file plus programmatic overrides. Command-line
//! flags always win over file values, which win over the built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::CanvasConfig;
use crate::{Result, SgfError};

fn d_canvas_w() -> usize {
    48
}
fn d_canvas_h() -> usize {
    48
}
fn d_canvas_z() -> usize {
    3
}
fn d_k() -> usize {
    5
}
fn d_epochs() -> usize {
    200
}
fn d_batch() -> usize {
    64
}
fn d_lr_actor() -> f64 {
    crate::model::LR_ACTOR
}
fn d_lr_critic() -> f64 {
    crate::model::LR_CRITIC
}
fn d_weight_decay() -> f64 {
    crate::model::WEIGHT_DECAY
}
fn d_seed() -> u64 {
    0
}
fn d_trajectories() -> usize {
    200
}
fn d_rollouts() -> usize {
    3
}
fn d_jobs() -> usize {
    1
}
fn d_weights() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub canvas_z: usize,
    /// Candidate-set size of the nearest-neighbor projection.
    pub k: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Number of random trajectories `gen` produces.
    pub trajectories: usize,
    /// Best-of-n attempts at inference time.
    pub rollouts: usize,
    /// Worker count; accepted for interface stability, execution is serial.
    pub jobs: usize,
    /// Per-component weights of the candidate-selection distance.
    pub selection_weights: [f64; 3],
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            canvas_w: d_canvas_w(),
            canvas_h: d_canvas_h(),
            canvas_z: d_canvas_z(),
            k: d_k(),
            epochs: d_epochs(),
            batch: d_batch(),
            lr_actor: d_lr_actor(),
            lr_critic: d_lr_critic(),
            weight_decay: d_weight_decay(),
            seed: d_seed(),
            trajectories: d_trajectories(),
            rollouts: d_rollouts(),
            jobs: d_jobs(),
            selection_weights: d_weights(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| SgfError::Invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| SgfError::io(path.display().to_string(), e))?;
        RunConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        // Canvas bounds are enforced by CanvasConfig::new.
        self.canvas()?;
        for (name, v) in [
            ("k", self.k),
            ("epochs", self.epochs),
            ("batch", self.batch),
            ("trajectories", self.trajectories),
            ("rollouts", self.rollouts),
            ("jobs", self.jobs),
        ] {
            if v < 1 {
                return Err(SgfError::Invalid(format!("config: {name} must be >= 1")));
            }
        }
        for (name, v) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SgfError::Invalid(format!("config: {name} must be positive")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(SgfError::Invalid("config: weight_decay must be >= 0".into()));
        }
        if self.selection_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(SgfError::Invalid("config: selection_weights must be >= 0".into()));
        }
        Ok(())
    }

    pub fn canvas(&self) -> Result<CanvasConfig> {
        CanvasConfig::new(self.canvas_w, self.canvas_h, self.canvas_z)
    }
}
