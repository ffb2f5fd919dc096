//! Adversarial imitation rewards over shared-space features: a GAIL
//! classifier scored with the AIRL reward, and a SAIL critic with a gradient
//! penalty plus an inverse-dynamics / VAE policy prior.

mod discriminator;
mod inverse;
mod pretrain;
mod vae;

pub use discriminator::{airl_reward_from_prob, Discriminator};
pub use inverse::InverseDynamicsModel;
pub use pretrain::{train_until_plateau, Plateau};
pub use vae::{DemoVae, DEFAULT_LATENT, DEFAULT_VAE_BETA};

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{DiffError, Tensor, TensorArchive, DEFAULT_HIDDEN, DEFAULT_LAYERS, DEFAULT_LR};
use crate::features::{FeatureError, FeatureMap, FeatureTrajectory};
use crate::rl_sac::{Batch, PriorTargets};
use crate::simenv::{Environment, SimError};

pub const PROB_CLAMP: f64 = 1e-6;
pub const DEFAULT_GRADIENT_PENALTY: f64 = 10.0;
pub const DEFAULT_PRIOR_SIGMA: f64 = 1.0;
pub const DEFAULT_RANDOM_STEPS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum ImitationError {
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("policy prior used before the inverse dynamics model and VAE were pretrained")]
    NotPretrained,
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IlAlgorithm {
    Gail,
    Sail,
}

impl IlAlgorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            IlAlgorithm::Gail => "gail",
            IlAlgorithm::Sail => "sail",
        }
    }
}

impl FromStr for IlAlgorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gail" => Ok(IlAlgorithm::Gail),
            "sail" => Ok(IlAlgorithm::Sail),
            other => Err(format!("unknown imitation algorithm `{other}` (expected gail or sail)")),
        }
    }
}

impl std::fmt::Display for IlAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImitationConfig {
    pub algorithm: IlAlgorithm,
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub gradient_penalty: f64,
    pub prior_sigma: f64,
    /// Weight of the prior term in the policy objective.
    pub prior_weight: f64,
    pub vae_beta: f64,
    pub vae_latent: usize,
    pub random_steps: usize,
    pub plateau: Plateau,
    /// Subtract a running mean from SAIL rewards.
    pub recentre_reward: bool,
    /// Keep fitting the inverse dynamics model on replay batches.
    pub online_inverse: bool,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        ImitationConfig {
            algorithm: IlAlgorithm::Sail,
            hidden: DEFAULT_HIDDEN,
            layers: DEFAULT_LAYERS,
            lr: DEFAULT_LR,
            weight_decay: 1e-5,
            gradient_penalty: DEFAULT_GRADIENT_PENALTY,
            prior_sigma: DEFAULT_PRIOR_SIGMA,
            prior_weight: 1.0,
            vae_beta: DEFAULT_VAE_BETA,
            vae_latent: DEFAULT_LATENT,
            random_steps: DEFAULT_RANDOM_STEPS,
            plateau: Plateau::default(),
            recentre_reward: false,
            online_inverse: true,
        }
    }
}

impl ImitationConfig {
    /// Narrower networks for single-core runs.
    pub fn desk() -> Self {
        ImitationConfig {
            hidden: 64,
            ..Self::default()
        }
    }
}

/// Gaussian prior over unit-box actions centred at the inverse-dynamics
/// action that reaches the VAE's predicted next features.
#[derive(Clone, Copy, Debug)]
pub struct PolicyPrior<'a> {
    pub inverse: &'a InverseDynamicsModel,
    pub vae: &'a DemoVae,
    pub sigma: f64,
    pub weight: f64,
}

impl PolicyPrior<'_> {
    pub fn new<'a>(
        inverse: &'a InverseDynamicsModel,
        vae: &'a DemoVae,
        sigma: f64,
        weight: f64,
    ) -> Result<PolicyPrior<'a>, ImitationError> {
        if !inverse.is_trained() || !vae.is_trained() {
            return Err(ImitationError::NotPretrained);
        }
        assert!(sigma > 0.0, "prior scale must be positive");
        Ok(PolicyPrior {
            inverse,
            vae,
            sigma,
            weight,
        })
    }

    /// Prior means for `obs ++ xi` rows with current features.
    pub fn centres(&self, states: &Tensor, features: &Tensor) -> Result<Tensor, ImitationError> {
        let target = self.vae.predict(features)?;
        Ok(self.inverse.predict(states, &target)?.map(|a| a.clamp(-1.0, 1.0)))
    }

    pub fn targets(&self, batch: &Batch) -> Result<PriorTargets, ImitationError> {
        Ok(PriorTargets {
            centres: self.centres(&batch.inputs, &batch.features)?,
            sigma: self.sigma,
            weight: self.weight,
        })
    }
}

/// Random-action transitions for inverse-dynamics pretraining.
#[derive(Clone, Debug, Default)]
pub struct RandomTransitions {
    /// `obs ++ xi`.
    pub states: Vec<Vec<f64>>,
    pub next_features: Vec<Vec<f64>>,
    /// Unit-box actions.
    pub actions: Vec<Vec<f64>>,
}

pub fn collect_random_transitions(
    env: &mut Environment,
    fmap: &FeatureMap,
    xi_unit: &[f64],
    steps: usize,
    seed: u64,
) -> Result<RandomTransitions, ImitationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limits = env.spec().torque_limits.clone();
    let mut out = RandomTransitions::default();
    let mut episode = 0u64;
    env.reset(seed);
    while out.actions.len() < steps {
        let obs = env.observation();
        let unit: Vec<f64> = limits.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let torque: Vec<f64> = unit.iter().zip(&limits).map(|(u, l)| u * l).collect();
        let res = env.step(&torque)?;
        if !res.failed {
            out.states.push(obs.iter().chain(xi_unit).copied().collect());
            out.next_features.push(fmap.phi_state(env, &res.state)?);
            out.actions.push(unit);
        }
        if res.terminated {
            episode += 1;
            env.reset(seed.wrapping_add(episode));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct PretrainReport {
    pub inverse_losses: Vec<f64>,
    pub vae_losses: Vec<f64>,
}

/// Reward model plus, for SAIL, the pretrained prior components.
#[derive(Clone, Debug)]
pub struct Imitation {
    cfg: ImitationConfig,
    disc: Discriminator,
    inverse: Option<InverseDynamicsModel>,
    vae: Option<DemoVae>,
    reward_mean: f64,
    reward_count: u64,
}

impl Imitation {
    pub fn new(
        cfg: ImitationConfig,
        feature_dim: usize,
        state_dim: usize,
        action_dim: usize,
        seed: u64,
    ) -> Self {
        let mut disc = Discriminator::new(
            feature_dim,
            cfg.hidden,
            cfg.layers,
            cfg.lr,
            cfg.weight_decay,
            seed,
        );
        disc.gradient_penalty = cfg.gradient_penalty;
        let (inverse, vae) = match cfg.algorithm {
            IlAlgorithm::Gail => (None, None),
            IlAlgorithm::Sail => {
                let inv = InverseDynamicsModel::new(
                    state_dim,
                    feature_dim,
                    action_dim,
                    cfg.hidden,
                    cfg.layers,
                    cfg.lr,
                    seed + 1,
                );
                let mut vae = DemoVae::new(feature_dim, cfg.vae_latent, cfg.hidden, cfg.layers, cfg.lr, seed + 2);
                vae.beta = cfg.vae_beta;
                (Some(inv), Some(vae))
            }
        };
        Imitation {
            cfg,
            disc,
            inverse,
            vae,
            reward_mean: 0.0,
            reward_count: 0,
        }
    }

    pub fn config(&self) -> &ImitationConfig {
        &self.cfg
    }

    pub fn algorithm(&self) -> IlAlgorithm {
        self.cfg.algorithm
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.disc
    }

    pub fn discriminator_mut(&mut self) -> &mut Discriminator {
        &mut self.disc
    }

    pub fn inverse(&self) -> Option<&InverseDynamicsModel> {
        self.inverse.as_ref()
    }

    pub fn vae(&self) -> Option<&DemoVae> {
        self.vae.as_ref()
    }

    /// Rewards for rows of `phi(s_t)`. The next-state features are accepted
    /// for interface symmetry but unused: rewards depend on single states.
    pub fn rewards(&mut self, features: &Tensor, _next: Option<&Tensor>) -> Result<Vec<f64>, ImitationError> {
        match self.cfg.algorithm {
            IlAlgorithm::Gail => self.disc.airl_rewards(features),
            IlAlgorithm::Sail => {
                let mut r = self.disc.logits(features)?;
                if self.cfg.recentre_reward {
                    for v in &mut r {
                        self.reward_count += 1;
                        self.reward_mean += (*v - self.reward_mean) / self.reward_count as f64;
                        *v -= self.reward_mean;
                    }
                }
                Ok(r)
            }
        }
    }

    pub fn reward(&mut self, phi: &[f64], phi_next: &[f64]) -> Result<f64, ImitationError> {
        let x = Tensor::row(phi);
        let y = Tensor::row(phi_next);
        Ok(self.rewards(&x, Some(&y))?[0])
    }

    /// One discriminator or critic step.
    pub fn update(&mut self, expert: &Tensor, policy: &Tensor) -> Result<f64, ImitationError> {
        match self.cfg.algorithm {
            IlAlgorithm::Gail => self.disc.gail_update(expert, policy),
            IlAlgorithm::Sail => self.disc.sail_update(expert, policy),
        }
    }

    pub fn is_pretrained(&self) -> bool {
        match (&self.inverse, &self.vae) {
            (Some(i), Some(v)) => i.is_trained() && v.is_trained(),
            _ => true,
        }
    }

    pub fn policy_prior(&self) -> Result<PolicyPrior<'_>, ImitationError> {
        match (&self.inverse, &self.vae) {
            (Some(i), Some(v)) => PolicyPrior::new(i, v, self.cfg.prior_sigma, self.cfg.prior_weight),
            _ => Err(ImitationError::NotPretrained),
        }
    }

    /// Prior term inputs for a SAC batch; `None` for GAIL.
    pub fn prior_targets(&self, batch: &Batch) -> Result<Option<PriorTargets>, ImitationError> {
        match self.cfg.algorithm {
            IlAlgorithm::Gail => Ok(None),
            IlAlgorithm::Sail => Ok(Some(self.policy_prior()?.targets(batch)?)),
        }
    }

    /// Online inverse-dynamics step on policy transitions.
    pub fn inverse_update(&mut self, batch: &Batch) -> Result<Option<f64>, ImitationError> {
        match (&mut self.inverse, self.cfg.online_inverse) {
            (Some(inv), true) => Ok(Some(inv.update(
                &batch.inputs,
                &batch.next_features,
                &batch.actions,
            )?)),
            _ => Ok(None),
        }
    }

    /// Fits the inverse dynamics model on random-action transitions and the
    /// VAE on consecutive demonstration features. A no-op for GAIL.
    pub fn pretrain(
        &mut self,
        env: &mut Environment,
        fmap: &FeatureMap,
        xi_unit: &[f64],
        demos: &[FeatureTrajectory],
        seed: u64,
    ) -> Result<PretrainReport, ImitationError> {
        let (Some(inv), Some(vae)) = (&mut self.inverse, &mut self.vae) else {
            return Ok(PretrainReport::default());
        };
        let data = collect_random_transitions(env, fmap, xi_unit, self.cfg.random_steps, seed)?;
        let inverse_losses = inv.fit(
            &data.states,
            &data.next_features,
            &data.actions,
            &self.cfg.plateau,
            seed + 1,
        )?;
        let (cur, next) = consecutive_pairs(demos);
        let vae_losses = vae.fit(&cur, &next, &self.cfg.plateau, seed + 2)?;
        log::info!(
            "pretrained inverse dynamics ({} epochs, loss {:.4}) and VAE ({} epochs, loss {:.4})",
            inverse_losses.len(),
            inverse_losses.last().copied().unwrap_or(f64::NAN),
            vae_losses.len(),
            vae_losses.last().copied().unwrap_or(f64::NAN),
        );
        Ok(PretrainReport {
            inverse_losses,
            vae_losses,
        })
    }

    pub fn save(&self, archive: &mut TensorArchive, prefix: &str) {
        self.disc.save(archive, &format!("{prefix}.disc"));
        if let Some(i) = &self.inverse {
            i.save(archive, &format!("{prefix}.inverse"));
        }
        if let Some(v) = &self.vae {
            v.save(archive, &format!("{prefix}.vae"));
        }
    }

    pub fn load(&mut self, archive: &TensorArchive, prefix: &str) -> Result<(), ImitationError> {
        self.disc.load(archive, &format!("{prefix}.disc"))?;
        if let Some(i) = &mut self.inverse {
            i.load(archive, &format!("{prefix}.inverse"))?;
        }
        if let Some(v) = &mut self.vae {
            v.load(archive, &format!("{prefix}.vae"))?;
        }
        Ok(())
    }
}

/// `(phi_t, phi_{t+1})` pairs from every trajectory.
pub fn consecutive_pairs(demos: &[FeatureTrajectory]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut cur = Vec::new();
    let mut next = Vec::new();
    for d in demos {
        for w in d.features().windows(2) {
            cur.push(w[0].clone());
            next.push(w[1].clone());
        }
    }
    (cur, next)
}
