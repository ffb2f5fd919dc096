use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::buffer::{Batch, ReplayBuffer};
use super::{SacConfig, SacError};
use crate::diff::{softplus, Activation, Adam, Learner, Mlp, Tape, Tensor, TensorArchive, Var};

const LN2: f64 = std::f64::consts::LN_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

/// Policy output: `unit` lies in `[-1, 1]`, `torque` is `unit` scaled by
/// the joint torque limits.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub unit: Vec<f64>,
    pub torque: Vec<f64>,
}

/// Per-sample prior centres for the policy objective; the extra loss is
/// `weight / sigma^2 * |tanh(mean) - centre|^2` averaged over the batch.
#[derive(Clone, Debug)]
pub struct PriorTargets {
    pub centres: Tensor,
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QLosses {
    pub q1: f64,
    pub q2: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PolicyStats {
    pub loss: f64,
    pub prior_loss: f64,
    pub entropy: f64,
    pub alpha: f64,
}

/// Soft actor-critic conditioned on a unit-cube morphology vector.
#[derive(Clone, Debug)]
pub struct SacAgent {
    cfg: SacConfig,
    obs_dim: usize,
    xi_dim: usize,
    action_scale: Vec<f64>,
    policy: Learner,
    q1: Learner,
    q2: Learner,
    q1_target: Mlp,
    q2_target: Mlp,
    log_alpha: Tensor,
    alpha_opt: Adam,
    rng: ChaCha8Rng,
}

/// `(mean, log_std)` rows from a raw policy head, log-std squashed into bounds.
fn split_head(out: &Tensor, act: usize, bounds: (f64, f64)) -> (Tensor, Tensor) {
    let mean = out.slice_cols(0, act);
    let half = 0.5 * (bounds.1 - bounds.0);
    let log_std = out
        .slice_cols(act, 2 * act)
        .map(|r| bounds.0 + half * (r.tanh() + 1.0));
    (mean, log_std)
}

/// `log(1 - tanh(u)^2)` without cancellation.
fn log_tanh_jacobian(u: f64) -> f64 {
    2.0 * (LN2 - u - softplus(-2.0 * u))
}

impl SacAgent {
    pub fn new(
        obs_dim: usize,
        xi_dim: usize,
        action_scale: Vec<f64>,
        cfg: SacConfig,
        seed: u64,
    ) -> Self {
        let act = action_scale.len();
        let input = obs_dim + xi_dim;
        let mlp = |i, o, s| Mlp::with_hidden(i, cfg.hidden, cfg.layers, o, Activation::Relu, s);
        let policy = Learner::new(mlp(input, 2 * act, seed), cfg.lr, 0.0);
        let q1 = Learner::new(mlp(input + act, 1, seed + 1), cfg.lr, cfg.q_weight_decay);
        let q2 = Learner::new(mlp(input + act, 1, seed + 2), cfg.lr, cfg.q_weight_decay);
        let q1_target = q1.net.clone();
        let q2_target = q2.net.clone();
        let alpha0 = cfg.fixed_alpha.unwrap_or(cfg.initial_alpha);
        let log_alpha = Tensor::scalar(alpha0.ln());
        let alpha_opt = Adam::new(std::slice::from_ref(&log_alpha), cfg.lr);
        SacAgent {
            cfg,
            obs_dim,
            xi_dim,
            action_scale,
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            alpha_opt,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5AC)),
        }
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn xi_dim(&self) -> usize {
        self.xi_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_scale.len()
    }

    pub fn action_scale(&self) -> &[f64] {
        &self.action_scale
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.item().exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.cfg
            .target_entropy
            .unwrap_or(-(self.action_dim() as f64))
    }

    pub fn policy_net(&self) -> &Mlp {
        &self.policy.net
    }

    pub fn q_nets(&self) -> (&Mlp, &Mlp) {
        (&self.q1.net, &self.q2.net)
    }

    pub fn target_nets(&self) -> (&Mlp, &Mlp) {
        (&self.q1_target, &self.q2_target)
    }

    pub fn policy_net_mut(&mut self) -> &mut Mlp {
        &mut self.policy.net
    }

    pub fn q_nets_mut(&mut self) -> (&mut Mlp, &mut Mlp) {
        (&mut self.q1.net, &mut self.q2.net)
    }

    fn check(&self, obs: &[f64], xi: &[f64]) -> Result<(), SacError> {
        if obs.len() != self.obs_dim || xi.len() != self.xi_dim {
            return Err(SacError::Shape(format!(
                "agent expects observation {} and morphology {}, got {} and {}",
                self.obs_dim,
                self.xi_dim,
                obs.len(),
                xi.len()
            )));
        }
        Ok(())
    }

    /// Squashed-Gaussian mean and log-std for each row of `inputs`.
    pub fn policy_head(&self, inputs: &Tensor) -> Result<(Tensor, Tensor), SacError> {
        let out = self.policy.net.forward(inputs)?;
        Ok(split_head(&out, self.action_dim(), self.cfg.log_std_bounds))
    }

    /// Draws `tanh(mean + std * eps)` and its log-density for every row.
    fn sample_rows(&mut self, inputs: &Tensor) -> Result<(Tensor, Vec<f64>), SacError> {
        let (mean, log_std) = self.policy_head(inputs)?;
        let (rows, act) = mean.shape();
        let mut actions = Tensor::zeros(rows, act);
        let mut logp = vec![0.0; rows];
        for r in 0..rows {
            for c in 0..act {
                let eps: f64 = self.rng.sample(StandardNormal);
                let ls = log_std.get(r, c);
                let u = mean.get(r, c) + ls.exp() * eps;
                actions.set(r, c, u.tanh());
                logp[r] += -0.5 * eps * eps - ls - HALF_LN_2PI - log_tanh_jacobian(u);
            }
        }
        Ok((actions, logp))
    }

    pub fn act(&mut self, obs: &[f64], xi: &[f64], mode: ActMode) -> Result<Action, SacError> {
        self.check(obs, xi)?;
        let input: Vec<f64> = obs.iter().chain(xi).copied().collect();
        let input = Tensor::row(&input);
        let unit: Vec<f64> = match mode {
            ActMode::Deterministic => {
                let (mean, _) = self.policy_head(&input)?;
                mean.data().iter().map(|m| m.tanh()).collect()
            }
            ActMode::Stochastic => self.sample_rows(&input)?.0.into_vec(),
        };
        Ok(self.scale(unit))
    }

    /// Uniform random action, for warm-up.
    pub fn random_action(&mut self) -> Action {
        let unit = (0..self.action_dim())
            .map(|_| self.rng.gen_range(-1.0..=1.0))
            .collect();
        self.scale(unit)
    }

    fn scale(&self, unit: Vec<f64>) -> Action {
        let torque = unit
            .iter()
            .zip(&self.action_scale)
            .map(|(u, s)| u * s)
            .collect();
        Action { unit, torque }
    }

    pub fn sample_batch(&mut self, buffer: &ReplayBuffer, size: usize) -> Result<Batch, SacError> {
        if buffer.is_empty() || size == 0 {
            return Err(SacError::EmptyBatch);
        }
        let idx = buffer.sample_indices(size, &mut self.rng);
        Ok(buffer.batch(&idx))
    }

    /// Regression targets `r + gamma * (1 - done) * (min Q'(s', a') - alpha log pi(a'|s'))`.
    pub fn q_targets(&mut self, batch: &Batch) -> Result<Tensor, SacError> {
        let (next_a, logp) = self.sample_rows(&batch.next_inputs)?;
        let qin = Tensor::hcat(&[&batch.next_inputs, &next_a]);
        let t1 = self.q1_target.forward(&qin)?;
        let t2 = self.q2_target.forward(&qin)?;
        let alpha = self.alpha();
        let gamma = self.cfg.gamma;
        let data = (0..batch.len())
            .map(|r| {
                let soft = t1.get(r, 0).min(t2.get(r, 0)) - alpha * logp[r];
                batch.rewards.get(r, 0) + gamma * batch.not_done.get(r, 0) * soft
            })
            .collect();
        Ok(Tensor::from_vec(batch.len(), 1, data)?)
    }

    pub fn q_update(&mut self, batch: &Batch) -> Result<QLosses, SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let y = self.q_targets(batch)?;
        let qin = Tensor::hcat(&[&batch.inputs, &batch.actions]);
        let l1 = regress(&mut self.q1, &qin, &y)?;
        let l2 = regress(&mut self.q2, &qin, &y)?;
        Ok(QLosses { q1: l1, q2: l2 })
    }

    pub fn policy_update(
        &mut self,
        batch: &Batch,
        prior: Option<&PriorTargets>,
    ) -> Result<PolicyStats, SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let act = self.action_dim();
        let rows = batch.len();
        let eps: Vec<f64> = (0..rows * act)
            .map(|_| self.rng.sample(StandardNormal))
            .collect();
        let eps = Tensor::from_vec(rows, act, eps)?;
        let alpha = self.alpha();
        let bounds = self.cfg.log_std_bounds;

        let mut tape = Tape::new();
        let pb = self.policy.net.bind(&mut tape);
        let b1 = self.q1.net.bind_frozen(&mut tape);
        let b2 = self.q2.net.bind_frozen(&mut tape);
        let x = tape.constant(batch.inputs.clone());
        let out = self.policy.net.apply(&mut tape, &pb, x)?;
        let mean = tape.slice_cols(out, 0, act);
        let raw = tape.slice_cols(out, act, 2 * act);
        let half = 0.5 * (bounds.1 - bounds.0);
        let t = tape.tanh(raw);
        let t = tape.scale(t, half);
        let log_std = tape.add_scalar(t, bounds.0 + half);
        let std = tape.exp(log_std);
        let e = tape.constant(eps.clone());
        let noise = tape.mul(std, e);
        let u = tape.add(mean, noise);
        let a = tape.tanh(u);
        let logp = log_density(&mut tape, &eps, log_std, u);
        let qin = tape.concat_cols(x, a);
        let q1 = self.q1.net.apply(&mut tape, &b1, qin)?;
        let q2 = self.q2.net.apply(&mut tape, &b2, qin)?;
        let q = tape.min(q1, q2);
        let ent = tape.scale(logp, alpha);
        let per = tape.sub(ent, q);
        let mut loss = tape.mean(per);
        let mut prior_loss = 0.0;
        if let Some(p) = prior {
            if p.centres.shape() != (rows, act) {
                return Err(SacError::Shape(format!(
                    "prior centres {:?}, expected {:?}",
                    p.centres.shape(),
                    (rows, act)
                )));
            }
            let c = tape.constant(p.centres.clone());
            let m = tape.tanh(mean);
            let d = tape.sub(m, c);
            let sq = tape.square(d);
            let s = tape.sum_cols(sq);
            let s = tape.scale(s, p.weight / (p.sigma * p.sigma));
            let pl = tape.mean(s);
            prior_loss = tape.value(pl).item();
            loss = tape.add(loss, pl);
        }
        let logp_values = tape.value(logp).data().to_vec();
        let loss_value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        let g = self.policy.net.grads(&pb, &grads);
        self.policy.step(&g)?;

        let mean_logp = logp_values.iter().sum::<f64>() / rows as f64;
        if self.cfg.fixed_alpha.is_none() {
            // d/d log_alpha of -log_alpha * (log pi + target entropy)
            let grad = Tensor::scalar(-(mean_logp + self.target_entropy()));
            self.alpha_opt
                .step(std::slice::from_mut(&mut self.log_alpha), &[grad])?;
        }
        Ok(PolicyStats {
            loss: loss_value,
            prior_loss,
            entropy: -mean_logp,
            alpha: self.alpha(),
        })
    }

    /// Polyak averaging of both target critics with the configured rate.
    pub fn soft_update(&mut self) {
        self.soft_update_with(self.cfg.tau);
    }

    pub fn soft_update_with(&mut self, tau: f64) {
        self.q1_target.soft_update_from(&self.q1.net, tau);
        self.q2_target.soft_update_from(&self.q2.net, tau);
    }

    /// Critic value of the deterministic action, averaged over `start_obs`,
    /// for each candidate morphology.
    pub fn morphology_values(
        &self,
        start_obs: &[Vec<f64>],
        xis: &[Vec<f64>],
    ) -> Result<Vec<f64>, SacError> {
        let mut values = vec![0.0; xis.len()];
        if start_obs.is_empty() {
            return Ok(values);
        }
        for obs in start_obs {
            let rows: Vec<Vec<f64>> = xis
                .iter()
                .map(|xi| obs.iter().chain(xi).copied().collect())
                .collect();
            let inputs = Tensor::from_rows(&rows)?;
            let (mean, _) = self.policy_head(&inputs)?;
            let a = mean.map(f64::tanh);
            let qin = Tensor::hcat(&[&inputs, &a]);
            let v1 = self.q1.net.forward(&qin)?;
            let v2 = self.q2.net.forward(&qin)?;
            for (i, v) in values.iter_mut().enumerate() {
                *v += v1.get(i, 0).min(v2.get(i, 0)) / start_obs.len() as f64;
            }
        }
        Ok(values)
    }

    pub fn save(&self, archive: &mut TensorArchive, prefix: &str) {
        self.policy.save(archive, &format!("{prefix}.policy"));
        self.q1.save(archive, &format!("{prefix}.q1"));
        self.q2.save(archive, &format!("{prefix}.q2"));
        archive.insert_all(&format!("{prefix}.q1_target"), self.q1_target.params());
        archive.insert_all(&format!("{prefix}.q2_target"), self.q2_target.params());
        archive.insert(format!("{prefix}.log_alpha"), self.log_alpha.clone());
        let (m, v) = self.alpha_opt.moments();
        archive.insert_all(&format!("{prefix}.alpha_m"), m);
        archive.insert_all(&format!("{prefix}.alpha_v"), v);
        archive.insert(
            format!("{prefix}.alpha_t"),
            Tensor::scalar(self.alpha_opt.steps() as f64),
        );
    }

    pub fn load(&mut self, archive: &TensorArchive, prefix: &str) -> Result<(), SacError> {
        self.policy.load(archive, &format!("{prefix}.policy"))?;
        self.q1.load(archive, &format!("{prefix}.q1"))?;
        self.q2.load(archive, &format!("{prefix}.q2"))?;
        self.q1_target
            .set_params(archive.get_all(&format!("{prefix}.q1_target")))?;
        self.q2_target
            .set_params(archive.get_all(&format!("{prefix}.q2_target")))?;
        self.log_alpha = archive.get(&format!("{prefix}.log_alpha"))?.clone();
        let t = archive.get(&format!("{prefix}.alpha_t"))?.item() as u64;
        self.alpha_opt.restore(
            archive.get_all(&format!("{prefix}.alpha_m")),
            archive.get_all(&format!("{prefix}.alpha_v")),
            t,
        )?;
        Ok(())
    }
}

/// Row log-densities of `tanh(u)`, `u = mean + exp(log_std) * eps`.
fn log_density(tape: &mut Tape, eps: &Tensor, log_std: Var, u: Var) -> Var {
    let base = tape.constant(eps.map(|e| -0.5 * e * e - HALF_LN_2PI));
    let gauss = tape.sub(base, log_std);
    // log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))
    let m2u = tape.scale(u, -2.0);
    let sp = tape.softplus(m2u);
    let s = tape.add(u, sp);
    let s = tape.neg(s);
    let s = tape.add_scalar(s, LN2);
    let jac = tape.scale(s, 2.0);
    let per = tape.sub(gauss, jac);
    tape.sum_cols(per)
}

/// One mean-squared-error step of `learner` toward `y`; returns the loss.
fn regress(learner: &mut Learner, x: &Tensor, y: &Tensor) -> Result<f64, SacError> {
    let mut tape = Tape::new();
    let b = learner.net.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let q = learner.net.apply(&mut tape, &b, xv)?;
    let yv = tape.constant(y.clone());
    let d = tape.sub(q, yv);
    let sq = tape.square(d);
    let loss = tape.mean(sq);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let g = learner.net.grads(&b, &grads);
    learner.step(&g)?;
    Ok(value)
}
