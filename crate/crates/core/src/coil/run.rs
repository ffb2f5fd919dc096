use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{seed_offset, CoilConfig, CoilError, DemoSet, EpisodeRecord, MetricSink};
use crate::diff::{Tensor, TensorArchive};
use crate::features::{phi_trajectory, FeatureMap, Source};
use crate::imitation::Imitation;
use crate::morphopt::{MorphDataset, MorphologyOptimizer};
use crate::rl_sac::{ActMode, ReplayBuffer, SacAgent, Transition};
use crate::simenv::{make_env, Environment, MorphologyVector};
use crate::transport::{subsample, trajectory_distance};

/// Final state of a run.
#[derive(Clone, Debug)]
pub struct CoilResult {
    pub dataset: MorphDataset,
    /// Lowest mean-distance morphology among completed blocks; the last
    /// morphology when no block completed.
    pub best_morphology: MorphologyVector,
    pub final_morphology: MorphologyVector,
    pub agent: SacAgent,
    pub imitation: Imitation,
    pub steps: u64,
    pub episodes: u64,
    pub replay_len: usize,
}

fn check_demos(env: &Environment, demos: &DemoSet) -> Result<(), CoilError> {
    if demos.trajectories.iter().all(|t| t.is_empty()) {
        return Err(CoilError::NoDemos);
    }
    let expected = FeatureMap::for_env(env).schema();
    for t in &demos.trajectories {
        if t.schema() != expected {
            return Err(CoilError::Schema {
                expected,
                got: t.schema(),
            });
        }
    }
    Ok(())
}

pub fn validate(cfg: &CoilConfig) -> Result<(), CoilError> {
    let bad = |m: &str| Err(CoilError::Config(m.to_string()));
    if cfg.episodes_per_morphology == 0 {
        return bad("episodes_per_morphology must be at least 1");
    }
    if cfg.sac.batch_size == 0 {
        return bad("batch_size must be at least 1");
    }
    if !(0.0..1.0).contains(&cfg.sac.gamma) {
        return bad("gamma must lie in [0, 1)");
    }
    if cfg.subsample == 0 {
        return bad("subsample must be at least 1");
    }
    Ok(())
}

/// Runs co-imitation until `cfg.max_steps` environment steps.
pub fn run(cfg: &CoilConfig, demos: &DemoSet, sink: &mut dyn MetricSink) -> Result<CoilResult, CoilError> {
    validate(cfg)?;
    let spec = cfg.env_spec()?;
    let default = match &cfg.initial_morphology {
        Some(v) => MorphologyVector::new(v.clone(), spec.bounds.clone())?,
        None => spec.default_xi()?,
    };
    let mut xi = default.clone();
    let mut env = make_env(&spec, &xi)?;
    check_demos(&env, demos)?;
    let fmap = FeatureMap::for_env(&env);
    let seed = cfg.seed;

    let mut optimizer = MorphologyOptimizer::new(cfg.strategy, &default, seed + seed_offset::PROPOSAL);
    optimizer.bo = cfg.bo.clone();
    optimizer.q = cfg.q_pso.clone();
    let mut dataset = MorphDataset::new();

    let mut agent = SacAgent::new(
        env.observation_dim(),
        spec.morphology_dim(),
        spec.torque_limits.clone(),
        cfg.sac.clone(),
        seed + seed_offset::AGENT,
    );
    let mut imitation = Imitation::new(
        cfg.imitation.clone(),
        fmap.schema().dim(),
        env.observation_dim() + spec.morphology_dim(),
        env.action_dim(),
        seed + seed_offset::IMITATION,
    );
    imitation.pretrain(
        &mut env,
        &fmap,
        &xi.to_unit(),
        &demos.trajectories,
        seed + seed_offset::PRETRAIN,
    )?;

    let pool: Vec<&[f64]> = demos
        .trajectories
        .iter()
        .flat_map(|t| t.features().iter().map(|f| f.as_slice()))
        .collect();
    let reference = subsample(&demos.trajectories, cfg.subsample, seed + seed_offset::SUBSAMPLE)?;
    let mut expert_rng = ChaCha8Rng::seed_from_u64(seed + seed_offset::EXPERT_BATCH);
    let mut buffer = ReplayBuffer::new(cfg.sac.replay_capacity);

    let mut step: u64 = 0;
    let mut episode: u64 = 0;
    let mut block = 0usize;
    'outer: loop {
        let xi_unit = xi.to_unit();
        dataset.begin(xi.params().to_vec());
        for _ in 0..cfg.episodes_per_morphology {
            if step >= cfg.max_steps {
                break 'outer;
            }
            let mut state = env.reset(seed + seed_offset::ENV + episode);
            let mut states = vec![state.clone()];
            let mut reward_sum = 0.0;
            let mut failed = false;
            let mut phi = fmap.phi_state(&env, &state)?;
            loop {
                let obs = env.observation();
                let action = if (step as usize) < cfg.sac.warmup_steps {
                    agent.random_action()
                } else {
                    agent.act(&obs, &xi_unit, ActMode::Stochastic)?
                };
                let res = env.step(&action.torque)?;
                step += 1;
                if res.failed {
                    log::warn!("simulator failure at step {step}; episode {episode} cut short");
                    failed = true;
                    break;
                }
                let phi_next = fmap.phi_state(&env, &res.state)?;
                let reward = imitation.reward(&phi, &phi_next)?;
                reward_sum += reward;
                buffer.push(Transition {
                    obs,
                    action: action.unit,
                    next_obs: env.observation(),
                    xi: xi_unit.clone(),
                    reward,
                    done: res.early_termination,
                    features: phi,
                    next_features: phi_next.clone(),
                });
                if buffer.len() >= cfg.sac.batch_size {
                    for _ in 0..cfg.sac.updates_per_step {
                        learn(&mut agent, &mut imitation, &buffer, &pool, &mut expert_rng)?;
                    }
                }
                phi = phi_next;
                state = res.state;
                states.push(state.clone());
                if res.terminated || step >= cfg.max_steps {
                    break;
                }
            }
            let traj = phi_trajectory(&states, &env, episode as usize, Source::Imitator)?;
            let distance = trajectory_distance(
                &traj,
                &reference,
                cfg.subsample,
                seed + seed_offset::SUBSAMPLE + 1 + episode,
            )?;
            dataset.record(distance);
            let steps_in_episode = (states.len() - 1).max(1);
            sink.record(&EpisodeRecord {
                step,
                episode,
                morphology: xi.params().to_vec(),
                wasserstein: distance,
                reward_mean: reward_sum / steps_in_episode as f64,
                strategy: cfg.strategy,
                seed,
                failed,
            })?;
            episode += 1;
        }
        dataset.close();
        let mut archive = TensorArchive::new();
        agent.save(&mut archive, "agent");
        imitation.save(&mut archive, "imitation");
        archive.insert("morphology", Tensor::row(xi.params()));
        sink.checkpoint(block, &archive)?;
        block += 1;
        if step >= cfg.max_steps {
            break;
        }
        if cfg.relabel_rewards {
            let im = &mut imitation;
            let mut err = None;
            buffer.relabel(|t| match im.reward(&t.features, &t.next_features) {
                Ok(r) => r,
                Err(e) => {
                    err.get_or_insert(e);
                    t.reward
                }
            });
            if let Some(e) = err {
                return Err(e.into());
            }
        }
        let starts: Vec<Vec<f64>> = (0..cfg.q_start_states as u64)
            .map(|k| {
                env.reset(seed + seed_offset::ENV + k);
                env.observation()
            })
            .collect();
        let mut critic = |units: &[Vec<f64>]| {
            agent
                .morphology_values(&starts, units)
                .unwrap_or_else(|_| vec![f64::NEG_INFINITY; units.len()])
        };
        xi = optimizer.propose(&dataset, step, cfg.epsilon_decay_steps, Some(&mut critic))?;
        log::info!("step {step}: next morphology {:?}", xi.params());
        env = make_env(&spec, &xi)?;
    }
    let best_morphology = match dataset.best() {
        Some(e) => MorphologyVector::new(e.xi.clone(), spec.bounds.clone())?,
        None => xi.clone(),
    };
    Ok(CoilResult {
        dataset,
        best_morphology,
        final_morphology: xi,
        agent,
        imitation,
        steps: step,
        episodes: episode,
        replay_len: buffer.len(),
    })
}

/// One discriminator, critic and policy update from replay.
fn learn(
    agent: &mut SacAgent,
    imitation: &mut Imitation,
    buffer: &ReplayBuffer,
    pool: &[&[f64]],
    rng: &mut ChaCha8Rng,
) -> Result<(), CoilError> {
    let size = agent.config().batch_size;
    let batch = agent.sample_batch(buffer, size)?;
    let expert_rows: Vec<&[f64]> = (0..size).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    let expert = Tensor::from_rows(&expert_rows)?;
    imitation.update(&expert, &batch.features)?;
    agent.q_update(&batch)?;
    let prior = imitation.prior_targets(&batch)?;
    agent.policy_update(&batch, prior.as_ref())?;
    imitation.inverse_update(&batch)?;
    agent.soft_update();
    Ok(())
}
