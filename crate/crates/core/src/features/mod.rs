//! Shared feature space for demonstrator and imitator states.
//!
//! Layout of a feature vector for `L` limbs with `K` tracked markers each:
//! `[positions (L*K*2) | velocities (L*K*2) | base velocity (2, optional)]`,
//! where positions and velocities are relative to the owning limb's base
//! marker and ordered limb-major, then marker, then x before y.

use crate::simenv::{Environment, MarkerSet, SimState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("schema mismatch: {0}")]
    SchemaError(String),
    #[error("empty trajectory")]
    EmptyTrajectory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureSchema {
    pub limbs: usize,
    pub markers_per_limb: usize,
    pub base_velocity: bool,
}

impl FeatureSchema {
    pub fn dim(&self) -> usize {
        self.position_dim() * 2 + if self.base_velocity { 2 } else { 0 }
    }

    pub fn position_dim(&self) -> usize {
        self.limbs * self.markers_per_limb * 2
    }
}

impl std::fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "limbs={} markers={} base_velocity={}",
            self.limbs, self.markers_per_limb, self.base_velocity
        )
    }
}

/// Which markers of each limb enter the feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    schema: FeatureSchema,
    /// Indices into each limb's marker list (0 is the base marker).
    selection: Vec<usize>,
}

impl FeatureMap {
    pub fn new(schema: FeatureSchema, selection: Vec<usize>) -> Result<Self, FeatureError> {
        if selection.len() != schema.markers_per_limb {
            return Err(FeatureError::SchemaError(format!(
                "{} selected markers for a schema with {} per limb",
                selection.len(),
                schema.markers_per_limb
            )));
        }
        if selection.contains(&0) {
            return Err(FeatureError::SchemaError(
                "the base marker is the reference and cannot be selected".into(),
            ));
        }
        Ok(FeatureMap { schema, selection })
    }

    /// The feature map declared by an environment's spec.
    pub fn for_env(env: &Environment) -> FeatureMap {
        let spec = env.spec();
        FeatureMap {
            schema: FeatureSchema {
                limbs: spec.limbs.len(),
                markers_per_limb: spec.feature_markers.len(),
                base_velocity: spec.feature_base_velocity,
            },
            selection: spec.feature_markers.clone(),
        }
    }

    pub fn schema(&self) -> FeatureSchema {
        self.schema
    }

    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    pub fn phi(&self, markers: &MarkerSet, base_velocity: [f64; 2]) -> Result<Vec<f64>, FeatureError> {
        if markers.limb_count() != self.schema.limbs {
            return Err(FeatureError::SchemaError(format!(
                "marker set has {} limbs, schema expects {}",
                markers.limb_count(),
                self.schema.limbs
            )));
        }
        let pd = self.schema.position_dim();
        let mut out = vec![0.0; self.schema.dim()];
        let mut k = 0;
        for l in 0..self.schema.limbs {
            let limb = markers.limb(l);
            let base = limb[0];
            for &i in &self.selection {
                let m = limb.get(i).ok_or_else(|| {
                    FeatureError::SchemaError(format!(
                        "limb {l} has {} markers, marker {i} requested",
                        limb.len()
                    ))
                })?;
                out[k] = m.position[0] - base.position[0];
                out[k + 1] = m.position[1] - base.position[1];
                out[pd + k] = m.velocity[0] - base.velocity[0];
                out[pd + k + 1] = m.velocity[1] - base.velocity[1];
                k += 2;
            }
        }
        if self.schema.base_velocity {
            out[2 * pd] = base_velocity[0];
            out[2 * pd + 1] = base_velocity[1];
        }
        Ok(out)
    }

    pub fn phi_state(&self, env: &Environment, state: &SimState) -> Result<Vec<f64>, FeatureError> {
        self.phi(&env.markers(state), state.base_velocity)
    }

    pub fn phi_trajectory(
        &self,
        states: &[SimState],
        env: &Environment,
    ) -> Result<Vec<Vec<f64>>, FeatureError> {
        if states.is_empty() {
            return Err(FeatureError::EmptyTrajectory);
        }
        states.iter().map(|s| self.phi_state(env, s)).collect()
    }
}

/// Features with every non-base marker of each limb selected.
pub fn phi(
    markers: &MarkerSet,
    base_velocity: [f64; 2],
    schema: FeatureSchema,
) -> Result<Vec<f64>, FeatureError> {
    let map = FeatureMap::new(schema, (1..=schema.markers_per_limb).collect())?;
    for l in 0..markers.limb_count() {
        if markers.limb(l).len() != schema.markers_per_limb + 1 {
            return Err(FeatureError::SchemaError(format!(
                "limb {l} has {} non-base markers, schema expects {}",
                markers.limb(l).len() - 1,
                schema.markers_per_limb
            )));
        }
    }
    map.phi(markers, base_velocity)
}

/// Applies the environment's feature map to every state.
pub fn phi_trajectory(
    states: &[SimState],
    env: &Environment,
    episode: usize,
    source: Source,
) -> Result<FeatureTrajectory, FeatureError> {
    let map = FeatureMap::for_env(env);
    let features = map.phi_trajectory(states, env)?;
    let morphology = match source {
        Source::Imitator => Some(env.morphology().params().to_vec()),
        Source::Expert => None,
    };
    FeatureTrajectory::new(map.schema(), features, episode, source, morphology)
}

/// Relative marker positions of a feature vector.
pub fn position_slice(schema: FeatureSchema, f: &[f64]) -> &[f64] {
    &f[..schema.position_dim()]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Expert,
    Imitator,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Expert => "expert",
            Source::Imitator => "imitator",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTrajectory {
    schema: FeatureSchema,
    features: Vec<Vec<f64>>,
    pub episode: usize,
    pub source: Source,
    pub morphology: Option<Vec<f64>>,
}

impl FeatureTrajectory {
    pub fn new(
        schema: FeatureSchema,
        features: Vec<Vec<f64>>,
        episode: usize,
        source: Source,
        morphology: Option<Vec<f64>>,
    ) -> Result<Self, FeatureError> {
        if features.is_empty() {
            return Err(FeatureError::EmptyTrajectory);
        }
        if let Some(bad) = features.iter().position(|f| f.len() != schema.dim()) {
            return Err(FeatureError::SchemaError(format!(
                "feature {bad} has length {}, schema dimension is {}",
                features[bad].len(),
                schema.dim()
            )));
        }
        Ok(FeatureTrajectory {
            schema,
            features,
            episode,
            source,
            morphology,
        })
    }

    pub fn schema(&self) -> FeatureSchema {
        self.schema
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let d = self.schema.position_dim();
        self.features.iter().map(move |f| &f[..d])
    }
}
