use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ImitationError;
use crate::diff::{Learner, Tape, Tensor};

/// Stopping rule for supervised pretraining: stop once the epoch loss has
/// not improved for `patience` consecutive epochs, or after `max_epochs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plateau {
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Relative improvement that counts as progress.
    pub min_improvement: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Plateau {
            patience: 10,
            max_epochs: 300,
            batch_size: 256,
            min_improvement: 1e-3,
        }
    }
}

/// Minibatch epochs of `step` over `n` samples until the loss plateaus.
/// Returns the per-epoch mean losses.
pub fn train_until_plateau(
    n: usize,
    rule: &Plateau,
    seed: u64,
    mut step: impl FnMut(&[usize]) -> Result<f64, ImitationError>,
) -> Result<Vec<f64>, ImitationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..rule.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in order.chunks(rule.batch_size.max(1)) {
            total += step(chunk)? * chunk.len() as f64;
            count += chunk.len();
        }
        let epoch = total / count.max(1) as f64;
        history.push(epoch);
        if epoch < best * (1.0 - rule.min_improvement) {
            best = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= rule.patience {
                break;
            }
        }
    }
    Ok(history)
}

pub(crate) fn gather(rows: &[Vec<f64>], idx: &[usize]) -> Tensor {
    let picked: Vec<&[f64]> = idx.iter().map(|&i| rows[i].as_slice()).collect();
    Tensor::from_rows(&picked).expect("uniform rows")
}

/// One mean-squared-error step of `learner` on `(x, y)`.
pub(crate) fn mse_step(learner: &mut Learner, x: &Tensor, y: &Tensor) -> Result<f64, ImitationError> {
    let mut tape = Tape::new();
    let b = learner.net.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let out = learner.net.apply(&mut tape, &b, xv)?;
    let yv = tape.constant(y.clone());
    let d = tape.sub(out, yv);
    let sq = tape.square(d);
    let s = tape.sum_cols(sq);
    let loss = tape.mean(s);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let g = learner.net.grads(&b, &grads);
    learner.step(&g)?;
    Ok(value)
}
