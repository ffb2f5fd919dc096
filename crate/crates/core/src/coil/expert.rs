use super::{seed_offset, CoilError, DemoSet};
use crate::features::{phi_trajectory, Source};
use crate::rl_sac::{ActMode, ReplayBuffer, SacAgent, SacConfig, Transition};
use crate::simenv::{make_env, EnvSpec, Environment, MorphologyVector, SimState};

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertConfig {
    pub training_steps: u64,
    pub episodes: usize,
    pub sac: SacConfig,
    /// Weight of the squared unit-action penalty.
    pub control_cost: f64,
    /// The expert must beat the random policy's mean displacement magnitude
    /// by this factor. Zero disables the check.
    pub competence_factor: f64,
    pub random_episodes: usize,
    pub episode_length: Option<usize>,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            training_steps: 100_000,
            episodes: 10,
            sac: SacConfig::desk(),
            control_cost: 1e-3,
            competence_factor: 5.0,
            random_episodes: 10,
            episode_length: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertReport {
    pub expert_displacement: f64,
    pub random_displacement: f64,
    pub training_returns: Vec<f64>,
}

/// Task progress per second minus a control penalty.
pub fn task_reward(env: &Environment, from: &SimState, to: &SimState, unit_action: &[f64], control_cost: f64) -> f64 {
    let progress = env.progress(from, to) / env.spec().timestep;
    progress - control_cost * unit_action.iter().map(|a| a * a).sum::<f64>()
}

/// Mean total task progress per episode of `policy`.
fn mean_displacement(
    env: &mut Environment,
    episodes: usize,
    seed: u64,
    mut policy: impl FnMut(&[f64]) -> Result<Vec<f64>, CoilError>,
) -> Result<f64, CoilError> {
    let mut total = 0.0;
    for ep in 0..episodes {
        let start = env.reset(seed + ep as u64);
        let mut last = start.clone();
        loop {
            let res = env.step(&policy(&env.observation())?)?;
            if res.failed {
                break;
            }
            last = res.state;
            if res.terminated {
                break;
            }
        }
        total += env.progress(&start, &last);
    }
    Ok(total / episodes.max(1) as f64)
}

/// Trains a soft actor-critic expert on the task reward at the preset's
/// default morphology and records deterministic demonstrations.
pub fn generate_demos(
    spec: &EnvSpec,
    cfg: &ExpertConfig,
    seed: u64,
) -> Result<(DemoSet, ExpertReport), CoilError> {
    let mut spec = spec.clone();
    if let Some(n) = cfg.episode_length {
        spec.episode_length = n;
    }
    let xi: MorphologyVector = spec.default_xi()?;
    let unit = xi.to_unit();
    let mut env = make_env(&spec, &xi)?;
    let mut agent = SacAgent::new(
        env.observation_dim(),
        unit.len(),
        spec.torque_limits.clone(),
        cfg.sac.clone(),
        seed + seed_offset::AGENT,
    );
    let mut buffer = ReplayBuffer::new(cfg.sac.replay_capacity);
    let mut step = 0u64;
    let mut episode = 0u64;
    let mut returns = Vec::new();
    while step < cfg.training_steps {
        let mut state = env.reset(seed + seed_offset::ENV + episode);
        let mut ret = 0.0;
        loop {
            let obs = env.observation();
            let action = if (step as usize) < cfg.sac.warmup_steps {
                agent.random_action()
            } else {
                agent.act(&obs, &unit, ActMode::Stochastic)?
            };
            let res = env.step(&action.torque)?;
            step += 1;
            if res.failed {
                break;
            }
            let r = task_reward(&env, &state, &res.state, &action.unit, cfg.control_cost);
            ret += r;
            buffer.push(Transition {
                obs,
                action: action.unit,
                next_obs: env.observation(),
                xi: unit.clone(),
                reward: r,
                done: res.early_termination,
                features: Vec::new(),
                next_features: Vec::new(),
            });
            if buffer.len() >= cfg.sac.batch_size {
                for _ in 0..cfg.sac.updates_per_step {
                    let b = agent.sample_batch(&buffer, cfg.sac.batch_size)?;
                    agent.q_update(&b)?;
                    agent.policy_update(&b, None)?;
                    agent.soft_update();
                }
            }
            state = res.state;
            if res.terminated || step >= cfg.training_steps {
                break;
            }
        }
        returns.push(ret);
        if episode.is_multiple_of(10) {
            log::info!("expert episode {episode}, step {step}, return {ret:.2}");
        }
        episode += 1;
    }

    let demo_seed = seed + seed_offset::EVAL;
    let mut trajectories = Vec::with_capacity(cfg.episodes);
    for ep in 0..cfg.episodes {
        let mut states = vec![env.reset(demo_seed + ep as u64)];
        loop {
            let a = agent.act(&env.observation(), &unit, ActMode::Deterministic)?;
            let res = env.step(&a.torque)?;
            if res.failed {
                break;
            }
            states.push(res.state);
            if res.terminated {
                break;
            }
        }
        let mut traj = phi_trajectory(&states, &env, ep, Source::Expert)?;
        traj.morphology = Some(xi.params().to_vec());
        trajectories.push(traj);
    }

    let expert_displacement = mean_displacement(&mut env, cfg.episodes, demo_seed, |obs| {
        Ok(agent.act(obs, &unit, ActMode::Deterministic)?.torque)
    })?;
    let mut random_agent = agent.clone();
    let random_displacement = mean_displacement(&mut env, cfg.random_episodes, demo_seed, |_| {
        Ok(random_agent.random_action().torque)
    })?;
    let report = ExpertReport {
        expert_displacement,
        random_displacement,
        training_returns: returns,
    };
    if cfg.competence_factor > 0.0
        && !(expert_displacement > 0.0
        && expert_displacement > cfg.competence_factor * random_displacement.abs())
    {
        return Err(CoilError::ExpertTooWeak {
            expert: expert_displacement,
            random: random_displacement,
            factor: cfg.competence_factor,
        });
    }
    Ok((
        DemoSet {
            env: spec.name.clone(),
            trajectories,
        },
        report,
    ))
}
