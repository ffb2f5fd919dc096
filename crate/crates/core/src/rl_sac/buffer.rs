use rand::Rng;

use crate::diff::Tensor;

/// One environment step. `action` is in the unit box `[-1, 1]`, `xi` is the
/// morphology mapped into the unit cube, `features` are the shared-space
/// features of `obs` and `next_obs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub xi: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub features: Vec<f64>,
    pub next_features: Vec<f64>,
}

pub const DEFAULT_REPLAY_CAPACITY: usize = 1_000_000;

/// Fixed-capacity ring buffer. Transitions from every morphology share it.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            cursor: 0,
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total insertions, including overwritten ones.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.pushed += 1;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Rewrites every stored reward.
    pub fn relabel(&mut self, mut reward: impl FnMut(&Transition) -> f64) {
        for t in &mut self.items {
            t.reward = reward(t);
        }
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch::from_transitions(indices.iter().map(|&i| &self.items[i]))
    }
}

/// Column-stacked minibatch.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `obs ++ xi` per row.
    pub inputs: Tensor,
    pub actions: Tensor,
    /// `next_obs ++ xi` per row.
    pub next_inputs: Tensor,
    pub rewards: Tensor,
    pub not_done: Tensor,
    pub features: Tensor,
    pub next_features: Tensor,
    pub obs_dim: usize,
}

impl Batch {
    pub fn from_transitions<'a>(items: impl IntoIterator<Item = &'a Transition>) -> Batch {
        let items: Vec<&Transition> = items.into_iter().collect();
        let join = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<f64>>();
        let rows = |f: &dyn Fn(&Transition) -> Vec<f64>| {
            let r: Vec<Vec<f64>> = items.iter().map(|t| f(t)).collect();
            Tensor::from_rows(&r).expect("uniform transition shapes")
        };
        Batch {
            inputs: rows(&|t| join(&t.obs, &t.xi)),
            actions: rows(&|t| t.action.clone()),
            next_inputs: rows(&|t| join(&t.next_obs, &t.xi)),
            rewards: rows(&|t| vec![t.reward]),
            not_done: rows(&|t| vec![if t.done { 0.0 } else { 1.0 }]),
            features: rows(&|t| t.features.clone()),
            next_features: rows(&|t| t.next_features.clone()),
            obs_dim: items.first().map_or(0, |t| t.obs.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}
