//! The co-imitation loop: alternate imitation learning at a fixed
//! morphology for a block of episodes with morphology proposals, plus
//! evaluation and expert demonstration generation.

mod eval;
mod expert;
mod run;

pub use eval::{evaluate, evaluate_policy, evaluate_random, EvalReport};
pub use expert::{generate_demos, task_reward, ExpertConfig, ExpertReport};
pub use run::{run, CoilResult};

use crate::diff::DiffError;
use crate::features::{FeatureError, FeatureSchema, FeatureTrajectory};
use crate::imitation::{IlAlgorithm, ImitationConfig, ImitationError};
use crate::morphopt::{BoConfig, MorphError, QPsoConfig, StrategyKind, DEFAULT_EPISODES_PER_MORPHOLOGY};
use crate::rl_sac::{SacConfig, SacError};
use crate::simenv::SimError;
use crate::transport::{TransportError, DEFAULT_SUBSAMPLE};

pub const DEFAULT_MAX_STEPS: u64 = 300_000;
pub const DEFAULT_EVAL_EPISODES: usize = 10;
pub const DEFAULT_EPSILON_DECAY_STEPS: u64 = 1_000_000;

/// Offsets added to a run's seed for each random stream.
pub mod seed_offset {
    pub const ENV: u64 = 1_000;
    pub const AGENT: u64 = 2_000;
    pub const IMITATION: u64 = 3_000;
    pub const SUBSAMPLE: u64 = 4_000;
    pub const PROPOSAL: u64 = 5_000;
    pub const PRETRAIN: u64 = 6_000;
    pub const EXPERT_BATCH: u64 = 7_000;
    pub const EVAL: u64 = 8_000;
}

#[derive(Debug, thiserror::Error)]
pub enum CoilError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("demonstration schema {got} does not match environment schema {expected}")]
    Schema {
        expected: FeatureSchema,
        got: FeatureSchema,
    },
    #[error("no demonstration trajectories")]
    NoDemos,
    #[error("expert too weak: mean displacement {expert:.4} vs random {random:.4} (needs > {factor} x |random| and > 0)")]
    ExpertTooWeak { expert: f64, random: f64, factor: f64 },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Imitation(#[from] ImitationError),
    #[error(transparent)]
    Morph(#[from] MorphError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Clone, Debug)]
pub struct CoilConfig {
    /// Environment preset name.
    pub env: String,
    pub episode_length: Option<usize>,
    pub algorithm: IlAlgorithm,
    pub strategy: StrategyKind,
    pub sac: SacConfig,
    pub imitation: ImitationConfig,
    pub bo: BoConfig,
    pub q_pso: QPsoConfig,
    pub epsilon_decay_steps: u64,
    pub episodes_per_morphology: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub eval_episodes: usize,
    pub subsample: usize,
    /// Starting morphology; the preset default when unset.
    pub initial_morphology: Option<Vec<f64>>,
    /// Recompute stored rewards with the current discriminator at every
    /// morphology switch.
    pub relabel_rewards: bool,
    /// Start states used to score morphologies for the `q_pso` strategy.
    pub q_start_states: usize,
}

impl Default for CoilConfig {
    fn default() -> Self {
        CoilConfig {
            env: "chain3".into(),
            episode_length: None,
            algorithm: IlAlgorithm::Sail,
            strategy: StrategyKind::Bo,
            sac: SacConfig::default(),
            imitation: ImitationConfig::default(),
            bo: BoConfig::default(),
            q_pso: QPsoConfig::default(),
            epsilon_decay_steps: DEFAULT_EPSILON_DECAY_STEPS,
            episodes_per_morphology: DEFAULT_EPISODES_PER_MORPHOLOGY,
            max_steps: DEFAULT_MAX_STEPS,
            seed: 0,
            eval_episodes: DEFAULT_EVAL_EPISODES,
            subsample: DEFAULT_SUBSAMPLE,
            initial_morphology: None,
            relabel_rewards: false,
            q_start_states: 8,
        }
    }
}

impl CoilConfig {
    /// The environment preset with the configured overrides applied.
    pub fn env_spec(&self) -> Result<crate::simenv::EnvSpec, CoilError> {
        let mut spec = crate::simenv::EnvSpec::preset(&self.env)?;
        if let Some(n) = self.episode_length {
            spec.episode_length = n;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// One training episode's log line.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    /// Environment steps taken so far, including this episode.
    pub step: u64,
    pub episode: u64,
    pub morphology: Vec<f64>,
    pub wasserstein: f64,
    pub reward_mean: f64,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub failed: bool,
}

/// Receives episode records as they complete.
pub trait MetricSink {
    fn record(&mut self, record: &EpisodeRecord) -> Result<(), CoilError>;

    /// Called after each completed morphology block with the agent state.
    fn checkpoint(
        &mut self,
        _index: usize,
        _archive: &crate::diff::TensorArchive,
    ) -> Result<(), CoilError> {
        Ok(())
    }
}

impl MetricSink for Vec<EpisodeRecord> {
    fn record(&mut self, record: &EpisodeRecord) -> Result<(), CoilError> {
        self.push(record.clone());
        Ok(())
    }
}

/// Demonstrations with the environment they were recorded in.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoSet {
    pub env: String,
    pub trajectories: Vec<FeatureTrajectory>,
}

impl DemoSet {
    pub fn schema(&self) -> Option<FeatureSchema> {
        self.trajectories.first().map(|t| t.schema())
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
