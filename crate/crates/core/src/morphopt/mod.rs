//! Morphology proposal strategies: Gaussian-process Bayesian optimisation,
//! random search, CMA-ES and a critic-driven particle-swarm baseline.

mod bo;
mod cmaes;
mod gp;
mod pso;

use std::collections::VecDeque;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use bo::{argmin_shuffled, candidate_grid, lcb, propose_bo_unit, BoConfig, BoProposal, DEFAULT_BETA, DEFAULT_GRID};
pub use cmaes::Cmaes;
pub use gp::{
    gp_fit, matern52, neg_log_marginal_likelihood, GpFitOptions, GpHyper, SurrogateModel,
    DEFAULT_WINDOW, NOISE_FLOOR,
};
pub use pso::{pso_maximize, DEFAULT_ITERS as PSO_ITERS, DEFAULT_PARTICLES as PSO_PARTICLES};

use crate::simenv::{MorphologyVector, SimError};

/// Episodes per morphology before a new proposal.
pub const DEFAULT_EPISODES_PER_MORPHOLOGY: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MorphError {
    #[error("surrogate model has not been fitted")]
    NotFitted,
    #[error("not enough completed morphologies ({0})")]
    InsufficientData(usize),
    #[error("gaussian process: {0}")]
    Gp(String),
    #[error("strategy needs a critic surface")]
    MissingCritic,
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub fn to_unit(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
        .collect()
}

/// One morphology and the per-episode distances observed while training
/// with it.
#[derive(Clone, Debug, PartialEq)]
pub struct MorphEntry {
    pub xi: Vec<f64>,
    pub distances: Vec<f64>,
    pub complete: bool,
}

impl MorphEntry {
    /// Mean per-episode distance.
    pub fn target(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.distances.len().max(1) as f64
    }
}

/// Append-only record of evaluated morphologies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MorphDataset {
    entries: Vec<MorphEntry>,
}

impl MorphDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a new entry. A still-open entry is closed first.
    pub fn begin(&mut self, xi: Vec<f64>) {
        self.close();
        self.entries.push(MorphEntry {
            xi,
            distances: Vec::new(),
            complete: false,
        });
    }

    /// Adds an episode distance to the open entry.
    pub fn record(&mut self, distance: f64) {
        if let Some(e) = self.entries.last_mut().filter(|e| !e.complete) {
            e.distances.push(distance);
        }
    }

    /// Marks the open entry complete if it holds at least one distance;
    /// an empty open entry is dropped.
    pub fn close(&mut self) {
        if let Some(e) = self.entries.last_mut() {
            if !e.complete {
                if e.distances.is_empty() {
                    self.entries.pop();
                } else {
                    e.complete = true;
                }
            }
        }
    }

    /// Appends a finished entry.
    pub fn push_complete(&mut self, xi: Vec<f64>, distances: Vec<f64>) {
        self.close();
        self.entries.push(MorphEntry {
            xi,
            distances,
            complete: true,
        });
        self.close();
    }

    pub fn entries(&self) -> &[MorphEntry] {
        &self.entries
    }

    pub fn completed(&self) -> impl Iterator<Item = &MorphEntry> {
        self.entries.iter().filter(|e| e.complete && !e.distances.is_empty())
    }

    pub fn completed_len(&self) -> usize {
        self.completed().count()
    }

    /// Morphologies and mean per-episode distances of the completed entries.
    pub fn targets(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        self.completed().map(|e| (e.xi.clone(), e.target())).unzip()
    }

    /// Completed entry with the lowest target.
    pub fn best(&self) -> Option<&MorphEntry> {
        self.completed().min_by(|a, b| a.target().total_cmp(&b.target()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyKind {
    Bo,
    Random,
    Cmaes,
    QPso,
    Fixed,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Bo,
        StrategyKind::Random,
        StrategyKind::Cmaes,
        StrategyKind::QPso,
        StrategyKind::Fixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Bo => "bo",
            StrategyKind::Random => "random",
            StrategyKind::Cmaes => "cmaes",
            StrategyKind::QPso => "q_pso",
            StrategyKind::Fixed => "fixed",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected bo, random, cmaes, q_pso or fixed)"))
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Uniform in-bounds sample.
pub fn propose_random(bounds: &[(f64, f64)], seed: u64) -> Result<MorphologyVector, MorphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit: Vec<f64> = bounds.iter().map(|_| rng.gen::<f64>()).collect();
    Ok(MorphologyVector::from_unit(&unit, bounds)?)
}

/// Linear decay from 1 at step 0 to 0 at `budget`.
pub fn exploration_rate(step: u64, budget: u64) -> f64 {
    if budget == 0 {
        return 0.0;
    }
    (1.0 - step as f64 / budget as f64).clamp(0.0, 1.0)
}

#[derive(Clone, Debug)]
pub struct QPsoConfig {
    pub particles: usize,
    pub iters: usize,
}

impl Default for QPsoConfig {
    fn default() -> Self {
        QPsoConfig {
            particles: PSO_PARTICLES,
            iters: PSO_ITERS,
        }
    }
}

/// Epsilon-greedy choice between a random morphology and the swarm maximum
/// of `value` (a batch scorer over unit-cube morphologies).
pub fn propose_q_baseline(
    bounds: &[(f64, f64)],
    step: u64,
    budget: u64,
    seed: u64,
    cfg: &QPsoConfig,
    value: impl FnMut(&[Vec<f64>]) -> Vec<f64>,
) -> Result<MorphologyVector, MorphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = exploration_rate(step, budget);
    if rng.gen::<f64>() < eps {
        return propose_random(bounds, rng.gen());
    }
    let (unit, _) = pso_maximize(bounds.len(), cfg.particles, cfg.iters, rng.gen(), value);
    Ok(MorphologyVector::from_unit(&unit, bounds)?)
}

/// CMA-ES driven by dataset entries: issued individuals are matched to the
/// completed entries that follow them, in order.
#[derive(Clone, Debug)]
pub struct CmaesProposer {
    es: Cmaes,
    queue: VecDeque<Vec<f64>>,
    awaiting: VecDeque<Vec<f64>>,
    evaluated: Vec<(Vec<f64>, f64)>,
    consumed: usize,
}

impl CmaesProposer {
    pub fn new(start_unit: &[f64], sigma: f64, seed: u64) -> Self {
        CmaesProposer {
            es: Cmaes::new(start_unit, sigma, seed),
            queue: VecDeque::new(),
            awaiting: VecDeque::new(),
            evaluated: Vec::new(),
            consumed: 0,
        }
    }

    pub fn es(&self) -> &Cmaes {
        &self.es
    }

    pub fn propose(&mut self, ds: &MorphDataset, bounds: &[(f64, f64)]) -> Result<MorphologyVector, MorphError> {
        let done: Vec<&MorphEntry> = ds.completed().collect();
        for e in done.iter().skip(self.consumed) {
            // Entries not issued by this proposer (the initial morphology)
            // are skipped.
            if let Some(x) = self.awaiting.pop_front() {
                self.evaluated.push((x, e.target()));
            }
        }
        self.consumed = done.len();
        if self.evaluated.len() >= self.es.lambda() {
            let batch: Vec<(Vec<f64>, f64)> = self.evaluated.drain(..).collect();
            self.es.tell(&batch);
        }
        if self.queue.is_empty() && self.awaiting.is_empty() {
            self.queue.extend(self.es.ask());
        }
        let x = match self.queue.pop_front() {
            Some(x) => x,
            None => {
                // Still waiting for evaluations of an earlier batch.
                let mut more = self.es.ask();
                more.truncate(1);
                more.pop().unwrap_or_else(|| self.es.mean().to_vec())
            }
        };
        self.awaiting.push_back(x.clone());
        let unit: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(MorphologyVector::from_unit(&unit, bounds)?)
    }
}

/// A configured strategy with its state.
#[derive(Clone, Debug)]
pub struct MorphologyOptimizer {
    kind: StrategyKind,
    bounds: Vec<(f64, f64)>,
    default: Vec<f64>,
    seed: u64,
    round: u64,
    pub bo: BoConfig,
    pub q: QPsoConfig,
    cmaes: Option<CmaesProposer>,
}

pub const CMAES_SIGMA: f64 = 0.3;

impl MorphologyOptimizer {
    pub fn new(kind: StrategyKind, default: &MorphologyVector, seed: u64) -> Self {
        let bounds = default.bounds().to_vec();
        let cmaes = (kind == StrategyKind::Cmaes)
            .then(|| CmaesProposer::new(&default.to_unit(), CMAES_SIGMA, seed));
        MorphologyOptimizer {
            kind,
            bounds,
            default: default.params().to_vec(),
            seed,
            round: 0,
            bo: BoConfig::default(),
            q: QPsoConfig::default(),
            cmaes,
        }
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn default_xi(&self) -> Result<MorphologyVector, MorphError> {
        Ok(MorphologyVector::new(self.default.clone(), self.bounds.clone())?)
    }

    /// Next morphology. `critic` scores unit-cube morphologies for the
    /// `q_pso` strategy; `step`/`budget` drive its exploration schedule.
    pub fn propose(
        &mut self,
        ds: &MorphDataset,
        step: u64,
        budget: u64,
        critic: Option<&mut dyn FnMut(&[Vec<f64>]) -> Vec<f64>>,
    ) -> Result<MorphologyVector, MorphError> {
        self.round += 1;
        let seed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.round);
        match self.kind {
            StrategyKind::Fixed => self.default_xi(),
            StrategyKind::Random => propose_random(&self.bounds, seed),
            StrategyKind::Bo => {
                let done = ds.completed_len();
                if done == 0 {
                    self.default_xi()
                } else if done < 2 {
                    propose_random(&self.bounds, seed)
                } else {
                    let p = propose_bo_unit(ds, &self.bounds, &self.bo, seed)?;
                    Ok(MorphologyVector::from_unit(&p.unit, &self.bounds)?)
                }
            }
            StrategyKind::Cmaes => {
                let bounds = self.bounds.clone();
                self.cmaes
                    .as_mut()
                    .expect("cmaes state")
                    .propose(ds, &bounds)
            }
            StrategyKind::QPso => {
                let critic = critic.ok_or(MorphError::MissingCritic)?;
                propose_q_baseline(&self.bounds, step, budget, seed, &self.q, critic)
            }
        }
    }
}
