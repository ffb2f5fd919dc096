use super::morphology::{MorphologyVector, MIN_LOWER_BOUND};
use super::SimError;

pub const PRESET_NAMES: &[&str] = &["pendulum", "chain2", "chain3", "chain2to3", "biped"];

#[derive(Clone, Debug, PartialEq)]
pub enum BaseKind {
    /// Limbs hang from fixed pivots at the given horizontal offsets.
    Fixed,
    /// A free torso rod with three planar degrees of freedom. `axis` is the
    /// torso direction at zero base angle, in the same angle convention as
    /// the limbs (`0` points down, `pi/2` points along +x, `pi` points up).
    Floating { axis: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimbSpec {
    /// Attachment point as a fraction of torso length along the torso axis
    /// (floating base) or as a horizontal offset in meters (fixed base).
    pub attach: f64,
    pub segments: usize,
}

/// How the morphology vector maps to rod lengths.
#[derive(Clone, Debug, PartialEq)]
pub enum MorphologyMap {
    /// One entry per limb segment, limb-major. The torso keeps `torso_length`.
    SegmentLengths { torso_length: f64 },
    /// Multiplicative scale factors applied to nominal lengths. `torso_group`
    /// and `limb_groups[l]` index the scale entry used by each part.
    Scales {
        torso_length: f64,
        segment_lengths: Vec<Vec<f64>>,
        torso_group: usize,
        limb_groups: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    pub friction_damping: f64,
    pub friction: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 1e4,
            damping: 100.0,
            friction_damping: 100.0,
            friction: 0.8,
        }
    }
}

/// Task reward used for expert training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// Forward displacement of the base along +x.
    Forward,
    /// Angular displacement of the first joint.
    Spin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub base: BaseKind,
    pub limbs: Vec<LimbSpec>,
    pub morphology: MorphologyMap,
    pub default_morphology: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    /// Mass per meter of rod.
    pub density: f64,
    pub gravity: f64,
    pub armature: f64,
    pub joint_damping: f64,
    /// Control interval in seconds; physics runs `substeps` steps inside it.
    pub timestep: f64,
    pub substeps: usize,
    pub torque_limits: Vec<f64>,
    pub episode_length: usize,
    /// Torso-centre height below which the episode ends early. `None`
    /// disables early termination.
    pub termination_height: Option<f64>,
    pub contact: Option<ContactParams>,
    pub task: Task,
    /// Non-base marker indices per limb used for features; `0` is the limb
    /// base, `segments` its tip.
    pub feature_markers: Vec<usize>,
    /// Whether the torso velocity is appended to feature vectors.
    pub feature_base_velocity: bool,
}

impl EnvSpec {
    pub fn preset(name: &str) -> Result<EnvSpec, SimError> {
        match name {
            "pendulum" => Ok(Self::pendulum()),
            "chain2" => Ok(Self::chain(2)),
            "chain3" => Ok(Self::chain(3)),
            "chain2to3" => Ok(Self::chain2to3()),
            "biped" => Ok(Self::biped()),
            _ => Err(SimError::UnknownPreset(name.to_string())),
        }
    }

    /// Single actuated rod on a fixed pivot; the task is to spin it.
    pub fn pendulum() -> EnvSpec {
        EnvSpec {
            name: "pendulum".into(),
            base: BaseKind::Fixed,
            limbs: vec![LimbSpec {
                attach: 0.0,
                segments: 1,
            }],
            morphology: MorphologyMap::SegmentLengths { torso_length: 0.0 },
            default_morphology: vec![0.5],
            bounds: vec![(0.1, 1.0)],
            density: 1.0,
            gravity: 9.81,
            armature: 0.01,
            joint_damping: 0.05,
            timestep: 0.05,
            substeps: 20,
            torque_limits: vec![2.0],
            episode_length: 200,
            termination_height: None,
            contact: None,
            task: Task::Spin,
            feature_markers: vec![1],
            feature_base_velocity: false,
        }
    }

    /// Two-legged planar runner (back and front leg on a horizontal torso)
    /// with two or three segments per leg.
    pub fn chain(segments: usize) -> EnvSpec {
        assert!(segments == 2 || segments == 3);
        let (back, front, torques): (Vec<f64>, Vec<f64>, Vec<f64>) = if segments == 3 {
            (
                vec![0.29, 0.30, 0.19],
                vec![0.27, 0.21, 0.14],
                vec![20.0, 15.0, 10.0],
            )
        } else {
            (vec![0.29, 0.30], vec![0.27, 0.21], vec![20.0, 15.0])
        };
        let default_morphology: Vec<f64> = back.iter().chain(&front).copied().collect();
        let bounds = default_morphology
            .iter()
            .map(|&d| (MIN_LOWER_BOUND, 2.0 * d))
            .collect();
        EnvSpec {
            name: format!("chain{segments}"),
            base: BaseKind::Floating {
                axis: std::f64::consts::FRAC_PI_2,
            },
            limbs: vec![
                LimbSpec {
                    attach: -0.5,
                    segments,
                },
                LimbSpec {
                    attach: 0.5,
                    segments,
                },
            ],
            morphology: MorphologyMap::SegmentLengths { torso_length: 1.0 },
            default_morphology,
            bounds,
            density: 4.0,
            gravity: 9.81,
            armature: 0.01,
            joint_damping: 0.2,
            timestep: 0.05,
            substeps: 20,
            torque_limits: torques.iter().chain(&torques).copied().collect(),
            episode_length: 1000,
            termination_height: None,
            contact: Some(ContactParams::default()),
            task: Task::Forward,
            feature_markers: (1..=segments).collect(),
            feature_base_velocity: true,
        }
    }

    /// Three-segment runner observed through the two-segment runner's
    /// feature layout: knee and foot-tip markers only.
    pub fn chain2to3() -> EnvSpec {
        EnvSpec {
            name: "chain2to3".into(),
            feature_markers: vec![1, 3],
            ..Self::chain(3)
        }
    }

    /// Morphology indices of segments that meet at a marker left out of the
    /// features; their lengths can trade off freely. Empty when every
    /// segment end is observed.
    pub fn redundant_segments(&self) -> Vec<usize> {
        let mut out = Vec::new();
        if !matches!(self.morphology, MorphologyMap::SegmentLengths { .. }) {
            return out;
        }
        let mut offset = 0;
        for limb in &self.limbs {
            for seg in 1..=limb.segments {
                if seg > 1 && !self.feature_markers.contains(&(seg - 1)) {
                    out.push(offset + seg - 2);
                    out.push(offset + seg - 1);
                }
            }
            offset += limb.segments;
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Upright torso with two legs and two arms; morphology is three scale
    /// factors (torso, arms, legs).
    pub fn biped() -> EnvSpec {
        let torso_length = 0.6;
        EnvSpec {
            name: "biped".into(),
            base: BaseKind::Floating {
                axis: std::f64::consts::PI,
            },
            limbs: vec![
                LimbSpec {
                    attach: -0.5,
                    segments: 2,
                },
                LimbSpec {
                    attach: -0.5,
                    segments: 2,
                },
                LimbSpec {
                    attach: 0.5,
                    segments: 2,
                },
                LimbSpec {
                    attach: 0.5,
                    segments: 2,
                },
            ],
            morphology: MorphologyMap::Scales {
                torso_length,
                segment_lengths: vec![
                    vec![0.45, 0.45],
                    vec![0.45, 0.45],
                    vec![0.3, 0.3],
                    vec![0.3, 0.3],
                ],
                torso_group: 0,
                limb_groups: vec![2, 2, 1, 1],
            },
            default_morphology: vec![1.0, 1.0, 1.0],
            bounds: vec![(0.5, 2.0); 3],
            density: 8.0,
            gravity: 9.81,
            armature: 0.02,
            joint_damping: 0.5,
            timestep: 0.05,
            substeps: 20,
            torque_limits: vec![40.0, 30.0, 40.0, 30.0, 10.0, 8.0, 10.0, 8.0],
            episode_length: 300,
            termination_height: Some(0.8),
            contact: Some(ContactParams::default()),
            task: Task::Forward,
            feature_markers: vec![1, 2],
            feature_base_velocity: true,
        }
    }

    pub fn is_floating(&self) -> bool {
        matches!(self.base, BaseKind::Floating { .. })
    }

    pub fn joint_count(&self) -> usize {
        self.limbs.iter().map(|l| l.segments).sum()
    }

    /// Generalised coordinate count.
    pub fn dof(&self) -> usize {
        self.joint_count() + if self.is_floating() { 3 } else { 0 }
    }

    pub fn morphology_dim(&self) -> usize {
        self.default_morphology.len()
    }

    pub fn default_xi(&self) -> Result<MorphologyVector, SimError> {
        MorphologyVector::new(self.default_morphology.clone(), self.bounds.clone())
    }

    /// Torso length and per-limb segment lengths for `xi`.
    pub fn geometry(&self, xi: &[f64]) -> Result<(f64, Vec<Vec<f64>>), SimError> {
        if xi.len() != self.morphology_dim() {
            return Err(SimError::DimensionError {
                expected: self.morphology_dim(),
                got: xi.len(),
            });
        }
        match &self.morphology {
            MorphologyMap::SegmentLengths { torso_length } => {
                let mut it = xi.iter().copied();
                let limbs = self
                    .limbs
                    .iter()
                    .map(|l| (0..l.segments).map(|_| it.next().unwrap_or(0.0)).collect())
                    .collect();
                Ok((*torso_length, limbs))
            }
            MorphologyMap::Scales {
                torso_length,
                segment_lengths,
                torso_group,
                limb_groups,
            } => {
                let limbs = segment_lengths
                    .iter()
                    .zip(limb_groups)
                    .map(|(segs, &g)| segs.iter().map(|s| s * xi[g]).collect())
                    .collect();
                Ok((torso_length * xi[*torso_group], limbs))
            }
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if !(self.timestep > 0.0) || self.substeps == 0 {
            return bad("timestep must be positive".into());
        }
        if self.episode_length == 0 {
            return bad("episode length must be positive".into());
        }
        if self.limbs.is_empty() || self.limbs.iter().any(|l| l.segments == 0) {
            return bad("every limb needs at least one segment".into());
        }
        if self.torque_limits.len() != self.joint_count() {
            return bad(format!(
                "{} torque limits for {} joints",
                self.torque_limits.len(),
                self.joint_count()
            ));
        }
        if self.torque_limits.iter().any(|&t| !(t > 0.0)) {
            return bad("torque limits must be positive".into());
        }
        if !(self.density > 0.0) || self.armature < 0.0 || self.joint_damping < 0.0 {
            return bad("density must be positive, armature and damping nonnegative".into());
        }
        if self.armature == 0.0 && self.bounds.iter().any(|b| b.0 < 1e-3) {
            log::debug!("zero armature with near-zero segment bounds may be ill-conditioned");
        }
        let min_segments = self.limbs.iter().map(|l| l.segments).min().unwrap_or(0);
        if self.feature_markers.is_empty()
            || self
                .feature_markers
                .iter()
                .any(|&m| m == 0 || m > min_segments)
        {
            return bad(format!(
                "feature markers {:?} must lie in 1..={min_segments}",
                self.feature_markers
            ));
        }
        if self.feature_markers.windows(2).any(|w| w[0] >= w[1]) {
            return bad("feature markers must be strictly increasing".into());
        }
        match &self.morphology {
            MorphologyMap::SegmentLengths { .. } => {
                if self.morphology_dim() != self.joint_count() {
                    return bad("segment-length morphology needs one entry per segment".into());
                }
            }
            MorphologyMap::Scales {
                segment_lengths,
                torso_group,
                limb_groups,
                ..
            } => {
                let dim = self.morphology_dim();
                if segment_lengths.len() != self.limbs.len()
                    || limb_groups.len() != self.limbs.len()
                    || segment_lengths
                        .iter()
                        .zip(&self.limbs)
                        .any(|(s, l)| s.len() != l.segments)
                    || *torso_group >= dim
                    || limb_groups.iter().any(|&g| g >= dim)
                {
                    return bad("scale morphology does not match the limb layout".into());
                }
            }
        }
        if self.bounds.len() != self.morphology_dim() {
            return bad("one bound pair per morphology parameter required".into());
        }
        self.default_xi().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            EnvSpec::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn chain_morphology_sizes() {
        assert_eq!(EnvSpec::chain(3).morphology_dim(), 6);
        assert_eq!(EnvSpec::chain(2).morphology_dim(), 4);
        assert_eq!(EnvSpec::chain(3).episode_length, 1000);
        assert_eq!(EnvSpec::chain(3).termination_height, None);
    }

    #[test]
    fn chain_bounds_are_twice_default() {
        let s = EnvSpec::chain(3);
        for (d, b) in s.default_morphology.iter().zip(&s.bounds) {
            assert_eq!(b.0, 1e-6);
            assert_eq!(b.1, 2.0 * d);
        }
    }

    #[test]
    fn scale_geometry() {
        let s = EnvSpec::biped();
        let (torso, limbs) = s.geometry(&[2.0, 1.0, 0.5]).unwrap();
        assert!((torso - 1.2).abs() < 1e-12);
        assert!((limbs[0][0] - 0.225).abs() < 1e-12);
        assert!((limbs[3][1] - 0.3).abs() < 1e-12);
    }
}
