use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::pretrain::{gather, train_until_plateau, Plateau};
use super::ImitationError;
use crate::diff::{Activation, Learner, Mlp, Tape, Tensor, TensorArchive};

pub const DEFAULT_LATENT: usize = 8;
pub const DEFAULT_VAE_BETA: f64 = 0.2;

/// Beta-VAE over demonstration features whose decoder predicts the feature
/// vector of the following timestep.
#[derive(Clone, Debug)]
pub struct DemoVae {
    encoder: Learner,
    decoder: Learner,
    latent: usize,
    pub beta: f64,
    trained: bool,
    rng: ChaCha8Rng,
}

impl DemoVae {
    pub fn new(feature_dim: usize, latent: usize, hidden: usize, layers: usize, lr: f64, seed: u64) -> Self {
        let enc = Mlp::with_hidden(feature_dim, hidden, layers, 2 * latent, Activation::Relu, seed);
        let dec = Mlp::with_hidden(latent, hidden, layers, feature_dim, Activation::Relu, seed + 1);
        DemoVae {
            encoder: Learner::new(enc, lr, 0.0),
            decoder: Learner::new(dec, lr, 0.0),
            latent,
            beta: DEFAULT_VAE_BETA,
            trained: false,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7AE),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.net.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Decodes the posterior mean: the predicted next feature vector.
    pub fn predict(&self, features: &Tensor) -> Result<Tensor, ImitationError> {
        let h = self.encoder.net.forward(features)?;
        let mu = h.slice_cols(0, self.latent);
        Ok(self.decoder.net.forward(&mu)?)
    }

    /// Mean squared prediction error per row, posterior-mean decoding.
    pub fn reconstruction_error(&self, x: &Tensor, y: &Tensor) -> Result<f64, ImitationError> {
        let p = self.predict(x)?;
        let err: f64 = p.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(err / x.rows().max(1) as f64)
    }

    /// One step on the negative evidence lower bound. Returns the loss.
    pub fn update(&mut self, x: &Tensor, y: &Tensor) -> Result<f64, ImitationError> {
        let rows = x.rows();
        let l = self.latent;
        let eps: Vec<f64> = (0..rows * l)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect();
        let eps = Tensor::from_vec(rows, l, eps)?;
        let mut tape = Tape::new();
        let be = self.encoder.net.bind(&mut tape);
        let bd = self.decoder.net.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let h = self.encoder.net.apply(&mut tape, &be, xv)?;
        let mu = tape.slice_cols(h, 0, l);
        let logvar = tape.slice_cols(h, l, 2 * l);
        let half = tape.scale(logvar, 0.5);
        let std = tape.exp(half);
        let e = tape.constant(eps);
        let noise = tape.mul(std, e);
        let z = tape.add(mu, noise);
        let out = self.decoder.net.apply(&mut tape, &bd, z)?;
        let yv = tape.constant(y.clone());
        let d = tape.sub(out, yv);
        let sq = tape.square(d);
        let rec = tape.sum_cols(sq);
        let rec = tape.mean(rec);
        // KL(N(mu, var) || N(0, 1)) = 1/2 sum(mu^2 + var - logvar - 1)
        let mu2 = tape.square(mu);
        let var = tape.exp(logvar);
        let k = tape.add(mu2, var);
        let k = tape.sub(k, logvar);
        let k = tape.add_scalar(k, -1.0);
        let k = tape.sum_cols(k);
        let k = tape.mean(k);
        let k = tape.scale(k, 0.5 * self.beta);
        let loss = tape.add(rec, k);
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?;
        let ge = self.encoder.net.grads(&be, &grads);
        let gd = self.decoder.net.grads(&bd, &grads);
        self.encoder.step(&ge)?;
        self.decoder.step(&gd)?;
        Ok(value)
    }

    /// Fits on consecutive feature pairs until the loss plateaus.
    pub fn fit(
        &mut self,
        current: &[Vec<f64>],
        next: &[Vec<f64>],
        rule: &Plateau,
        seed: u64,
    ) -> Result<Vec<f64>, ImitationError> {
        if current.is_empty() {
            return Err(ImitationError::EmptyBatch);
        }
        let history = train_until_plateau(current.len(), rule, seed, |idx| {
            let (x, y) = (gather(current, idx), gather(next, idx));
            self.update(&x, &y)
        })?;
        self.trained = true;
        Ok(history)
    }

    pub fn save(&self, archive: &mut TensorArchive, prefix: &str) {
        self.encoder.save(archive, &format!("{prefix}.encoder"));
        self.decoder.save(archive, &format!("{prefix}.decoder"));
    }

    pub fn load(&mut self, archive: &TensorArchive, prefix: &str) -> Result<(), ImitationError> {
        self.encoder.load(archive, &format!("{prefix}.encoder"))?;
        self.decoder.load(archive, &format!("{prefix}.decoder"))?;
        self.trained = true;
        Ok(())
    }
}
