use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mean_std, CoilError, DemoSet};
use crate::features::{phi_trajectory, Source};
use crate::rl_sac::{ActMode, SacAgent};
use crate::simenv::{make_env, EnvSpec, MorphologyVector};
use crate::transport::{subsample, trajectory_distance};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub distances: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub morphology: Vec<f64>,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

/// Rolls out `policy` (observation to torque) for `episodes` episodes and
/// scores each against the pooled demonstrations.
pub fn evaluate_policy(
    policy: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>, CoilError>,
    spec: &EnvSpec,
    xi: &MorphologyVector,
    demos: &DemoSet,
    episodes: usize,
    cap: usize,
    seed: u64,
) -> Result<EvalReport, CoilError> {
    if episodes == 0 {
        return Err(CoilError::Config("evaluation needs at least one episode".into()));
    }
    let start = Instant::now();
    let mut env = make_env(spec, xi)?;
    let reference = subsample(&demos.trajectories, cap, seed)?;
    let mut distances = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut states = vec![env.reset(seed + 1 + ep as u64)];
        loop {
            let torque = policy(&env.observation())?;
            let res = env.step(&torque)?;
            if res.failed {
                break;
            }
            states.push(res.state);
            if res.terminated {
                break;
            }
        }
        let traj = phi_trajectory(&states, &env, ep, Source::Imitator)?;
        distances.push(trajectory_distance(&traj, &reference, cap, seed + 1000 + ep as u64)?);
    }
    let (mean, std) = mean_std(&distances);
    Ok(EvalReport {
        distances,
        mean,
        std,
        morphology: xi.params().to_vec(),
        seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Deterministic-mode evaluation of a trained agent at morphology `xi`.
pub fn evaluate(
    agent: &mut SacAgent,
    spec: &EnvSpec,
    xi: &MorphologyVector,
    demos: &DemoSet,
    episodes: usize,
    cap: usize,
    seed: u64,
) -> Result<EvalReport, CoilError> {
    let unit = xi.to_unit();
    let mut policy = |obs: &[f64]| -> Result<Vec<f64>, CoilError> {
        Ok(agent.act(obs, &unit, ActMode::Deterministic)?.torque)
    };
    evaluate_policy(&mut policy, spec, xi, demos, episodes, cap, seed)
}

/// Uniformly random torques, for baselines.
pub fn evaluate_random(
    spec: &EnvSpec,
    xi: &MorphologyVector,
    demos: &DemoSet,
    episodes: usize,
    cap: usize,
    seed: u64,
) -> Result<EvalReport, CoilError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11);
    let limits = spec.torque_limits.clone();
    let mut policy = |_: &[f64]| -> Result<Vec<f64>, CoilError> {
        Ok(limits.iter().map(|l| rng.gen_range(-1.0..=1.0) * l).collect())
    };
    evaluate_policy(&mut policy, spec, xi, demos, episodes, cap, seed)
}
