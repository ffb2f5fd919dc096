use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ImitationError, DEFAULT_GRADIENT_PENALTY, PROB_CLAMP};
use crate::diff::{sigmoid, Activation, Learner, Mlp, Tape, Tensor, TensorArchive};

/// Scalar-output network over single feature vectors. Used as a logistic
/// classifier (GAIL) or as an unbounded critic (SAIL).
#[derive(Clone, Debug)]
pub struct Discriminator {
    learner: Learner,
    pub gradient_penalty: f64,
    rng: ChaCha8Rng,
}

/// Logit of `psi`, with `psi` clamped away from 0 and 1 when `clamp` is set.
pub fn airl_reward_from_prob(psi: f64, clamp: bool) -> f64 {
    let p = if clamp {
        psi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    } else {
        psi
    };
    p.ln() - (1.0 - p).ln()
}

impl Discriminator {
    pub fn new(
        input_dim: usize,
        hidden: usize,
        layers: usize,
        lr: f64,
        weight_decay: f64,
        seed: u64,
    ) -> Self {
        let net = Mlp::with_hidden(input_dim, hidden, layers, 1, Activation::Relu, seed);
        Discriminator {
            learner: Learner::new(net, lr, weight_decay),
            gradient_penalty: DEFAULT_GRADIENT_PENALTY,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xD15C),
        }
    }

    pub fn from_net(net: Mlp, lr: f64, weight_decay: f64, seed: u64) -> Self {
        Discriminator {
            learner: Learner::new(net, lr, weight_decay),
            gradient_penalty: DEFAULT_GRADIENT_PENALTY,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xD15C),
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.learner.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.learner.net
    }

    pub fn input_dim(&self) -> usize {
        self.learner.net.input_dim()
    }

    fn check(&self, x: &Tensor) -> Result<(), ImitationError> {
        if x.cols() != self.input_dim() {
            return Err(ImitationError::DimensionError {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        if x.rows() == 0 {
            return Err(ImitationError::EmptyBatch);
        }
        Ok(())
    }

    /// Raw network output per row.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>, ImitationError> {
        if x.cols() != self.input_dim() {
            return Err(ImitationError::DimensionError {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(self.learner.net.forward(x)?.into_vec())
    }

    pub fn probabilities(&self, x: &Tensor) -> Result<Vec<f64>, ImitationError> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn airl_rewards(&self, x: &Tensor) -> Result<Vec<f64>, ImitationError> {
        Ok(self
            .probabilities(x)?
            .into_iter()
            .map(|p| airl_reward_from_prob(p, true))
            .collect())
    }

    /// One logistic-regression step: expert rows labelled 1, policy rows 0.
    pub fn gail_update(&mut self, expert: &Tensor, policy: &Tensor) -> Result<f64, ImitationError> {
        self.check(expert)?;
        self.check(policy)?;
        let mut tape = Tape::new();
        let b = self.learner.net.bind(&mut tape);
        let xe = tape.constant(expert.clone());
        let xp = tape.constant(policy.clone());
        let le = self.learner.net.apply(&mut tape, &b, xe)?;
        let lp = self.learner.net.apply(&mut tape, &b, xp)?;
        // -log sigmoid(l) = softplus(-l); -log(1 - sigmoid(l)) = softplus(l)
        let ne = tape.neg(le);
        let se = tape.softplus(ne);
        let sp = tape.softplus(lp);
        let me = tape.mean(se);
        let mp = tape.mean(sp);
        let loss = tape.add(me, mp);
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        let g = self.learner.net.grads(&b, &grads);
        self.learner.step(&g)?;
        Ok(value)
    }

    /// Mean critic difference `E[c(policy)] - E[c(expert)]` plus the
    /// gradient penalty on random interpolates. Returns `(loss, penalty)`.
    pub fn sail_loss(
        &mut self,
        tape: &mut Tape,
        bound: &crate::diff::BoundMlp,
        expert: &Tensor,
        policy: &Tensor,
    ) -> Result<(crate::diff::Var, crate::diff::Var), ImitationError> {
        let net = &self.learner.net;
        let xe = tape.constant(expert.clone());
        let xp = tape.constant(policy.clone());
        let ce = net.apply(tape, bound, xe)?;
        let cp = net.apply(tape, bound, xp)?;
        let me = tape.mean(ce);
        let mp = tape.mean(cp);
        let diff = tape.sub(mp, me);
        let rows = expert.rows().min(policy.rows());
        let dim = expert.cols();
        let mut mix = Tensor::zeros(rows, dim);
        for r in 0..rows {
            let t: f64 = self.rng.gen();
            for c in 0..dim {
                mix.set(r, c, t * expert.get(r, c) + (1.0 - t) * policy.get(r, c));
            }
        }
        let xm = tape.constant(mix);
        let (_, g) = net.apply_with_input_grad(tape, bound, xm)?;
        let sq = tape.square(g);
        let s = tape.sum_cols(sq);
        let s = tape.add_scalar(s, 1e-12);
        let norm = tape.sqrt(s);
        let dev = tape.add_scalar(norm, -1.0);
        let dev = tape.square(dev);
        let pen = tape.mean(dev);
        let pen = tape.scale(pen, self.gradient_penalty);
        let loss = tape.add(diff, pen);
        Ok((loss, pen))
    }

    /// One critic step; higher outputs mean more expert-like.
    pub fn sail_update(&mut self, expert: &Tensor, policy: &Tensor) -> Result<f64, ImitationError> {
        self.check(expert)?;
        self.check(policy)?;
        let mut tape = Tape::new();
        let b = self.learner.net.bind(&mut tape);
        let (loss, _) = self.sail_loss(&mut tape, &b, expert, policy)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        let g = self.learner.net.grads(&b, &grads);
        self.learner.step(&g)?;
        Ok(value)
    }

    /// Gradient-penalty term alone, on interpolates between the batches.
    pub fn gradient_penalty_value(
        &mut self,
        expert: &Tensor,
        policy: &Tensor,
    ) -> Result<f64, ImitationError> {
        self.check(expert)?;
        self.check(policy)?;
        let mut tape = Tape::new();
        let b = self.learner.net.bind_frozen(&mut tape);
        let (_, pen) = self.sail_loss(&mut tape, &b, expert, policy)?;
        Ok(tape.value(pen).item())
    }

    pub fn save(&self, archive: &mut TensorArchive, prefix: &str) {
        self.learner.save(archive, prefix);
    }

    pub fn load(&mut self, archive: &TensorArchive, prefix: &str) -> Result<(), ImitationError> {
        Ok(self.learner.load(archive, prefix)?)
    }
}
