//! Planar articulated-chain simulator whose body geometry is set by a
//! morphology vector.

mod body;
mod env;
mod morphology;
mod spec;

pub use env::{Environment, SimState, StepResult};
pub use morphology::MorphologyVector;
pub use spec::{BaseKind, ContactParams, EnvSpec, LimbSpec, MorphologyMap, Task, PRESET_NAMES};

pub use body::{Marker, MarkerSet};

/// Builds an environment for `spec` with body geometry taken from `xi`.
pub fn make_env(spec: &EnvSpec, xi: &MorphologyVector) -> Result<Environment, SimError> {
    Environment::new(spec.clone(), xi.clone())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("morphology parameter {index} = {value} outside [{lower}, {upper}]")]
    BoundsViolation {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("expected {expected} values, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("action contains a non-finite entry")]
    InvalidAction,
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("episode already finished, call reset first")]
    EpisodeFinished,
    #[error("unknown environment preset `{0}`")]
    UnknownPreset(String),
}
