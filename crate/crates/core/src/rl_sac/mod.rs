//! Soft actor-critic with automatic entropy tuning. Policy and critics take
//! the observation concatenated with the unit-cube morphology vector.

mod agent;
mod buffer;

pub use agent::{ActMode, Action, PolicyStats, PriorTargets, QLosses, SacAgent};
pub use buffer::{Batch, ReplayBuffer, Transition, DEFAULT_REPLAY_CAPACITY};

use crate::diff::{DiffError, DEFAULT_HIDDEN, DEFAULT_LAYERS, DEFAULT_LR};

#[derive(Debug, thiserror::Error)]
pub enum SacError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SacConfig {
    pub hidden: usize,
    /// Affine layers per network.
    pub layers: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub q_weight_decay: f64,
    pub initial_alpha: f64,
    /// Disables entropy tuning when set.
    pub fixed_alpha: Option<f64>,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub log_std_bounds: (f64, f64),
    pub replay_capacity: usize,
    pub updates_per_step: usize,
    /// Uniform random actions before the first policy action.
    pub warmup_steps: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: DEFAULT_HIDDEN,
            layers: DEFAULT_LAYERS,
            batch_size: 1024,
            gamma: 0.97,
            tau: 0.005,
            lr: DEFAULT_LR,
            q_weight_decay: 1e-5,
            initial_alpha: 1.0,
            fixed_alpha: None,
            target_entropy: None,
            log_std_bounds: (-5.0, 2.0),
            replay_capacity: DEFAULT_REPLAY_CAPACITY,
            updates_per_step: 1,
            warmup_steps: 1000,
        }
    }
}

impl SacConfig {
    /// Smaller networks and batches for single-core runs.
    pub fn desk() -> Self {
        SacConfig {
            hidden: 64,
            batch_size: 128,
            ..Self::default()
        }
    }
}
