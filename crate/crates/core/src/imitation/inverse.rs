use super::pretrain::{gather, mse_step, train_until_plateau, Plateau};
use super::ImitationError;
use crate::diff::{Activation, Learner, Mlp, Tensor, TensorArchive};

/// Predicts the unit-box action that moves the body from `obs ++ xi` to a
/// target feature vector.
#[derive(Clone, Debug)]
pub struct InverseDynamicsModel {
    learner: Learner,
    action_dim: usize,
    trained: bool,
}

impl InverseDynamicsModel {
    pub fn new(
        state_dim: usize,
        feature_dim: usize,
        action_dim: usize,
        hidden: usize,
        layers: usize,
        lr: f64,
        seed: u64,
    ) -> Self {
        let net = Mlp::with_hidden(
            state_dim + feature_dim,
            hidden,
            layers,
            action_dim,
            Activation::Relu,
            seed,
        );
        InverseDynamicsModel {
            learner: Learner::new(net, lr, 0.0),
            action_dim,
            trained: false,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// `states` rows are `obs ++ xi`, `targets` rows are next features.
    pub fn predict(&self, states: &Tensor, targets: &Tensor) -> Result<Tensor, ImitationError> {
        let x = Tensor::hcat(&[states, targets]);
        Ok(self.learner.net.forward(&x)?)
    }

    pub fn update(&mut self, states: &Tensor, targets: &Tensor, actions: &Tensor) -> Result<f64, ImitationError> {
        let x = Tensor::hcat(&[states, targets]);
        mse_step(&mut self.learner, &x, actions)
    }

    /// Fits on `(state, next feature, action)` rows until the loss plateaus.
    pub fn fit(
        &mut self,
        states: &[Vec<f64>],
        targets: &[Vec<f64>],
        actions: &[Vec<f64>],
        rule: &Plateau,
        seed: u64,
    ) -> Result<Vec<f64>, ImitationError> {
        if states.is_empty() {
            return Err(ImitationError::EmptyBatch);
        }
        let inputs: Vec<Vec<f64>> = states
            .iter()
            .zip(targets)
            .map(|(s, t)| s.iter().chain(t).copied().collect())
            .collect();
        let learner = &mut self.learner;
        let history = train_until_plateau(inputs.len(), rule, seed, |idx| {
            mse_step(learner, &gather(&inputs, idx), &gather(actions, idx))
        })?;
        self.trained = true;
        Ok(history)
    }

    pub fn save(&self, archive: &mut TensorArchive, prefix: &str) {
        self.learner.save(archive, prefix);
    }

    pub fn load(&mut self, archive: &TensorArchive, prefix: &str) -> Result<(), ImitationError> {
        self.learner.load(archive, prefix)?;
        self.trained = true;
        Ok(())
    }
}
