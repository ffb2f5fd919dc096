//! Exact Wasserstein-1 distance between uniform empirical distributions
//! with Euclidean ground cost.

mod assignment;
mod flow;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureTrajectory;

/// States drawn per side when estimating a distance.
pub const DEFAULT_SUBSAMPLE: usize = 500;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionError(usize, usize),
    #[error("transport solver failed: {0}")]
    SolverError(String),
    #[error("no samples")]
    EmptyInput,
    #[error("need at least two demonstrations, got {0}")]
    InsufficientData(usize),
}

/// Uniformly weighted point cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<Vec<f64>>,
}

impl EmpiricalDistribution {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self, TransportError> {
        let dim = samples.first().ok_or(TransportError::EmptyInput)?.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(TransportError::DimensionError(dim, bad.len()));
        }
        Ok(EmpiricalDistribution { samples })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.len() as f64; self.len()]
    }

    pub fn scaled(&self, c: f64) -> EmpiricalDistribution {
        EmpiricalDistribution {
            samples: self
                .samples
                .iter()
                .map(|s| s.iter().map(|v| v * c).collect())
                .collect(),
        }
    }
}

/// Sparse coupling between two empirical distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// `(source, target, mass)` with positive mass.
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for &(i, _, w) in &self.entries {
            s[i] += w;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for &(_, j, w) in &self.entries {
            s[j] += w;
        }
        s
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Optimal transport between `a` and `b` solved exactly.
pub fn wasserstein_exact(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
) -> Result<(f64, TransportPlan), TransportError> {
    if a.dim() != b.dim() {
        return Err(TransportError::DimensionError(a.dim(), b.dim()));
    }
    let (n, m) = (a.len(), b.len());
    let mut cost = Vec::with_capacity(n * m);
    for x in &a.samples {
        for y in &b.samples {
            cost.push(euclid(x, y));
        }
    }
    let entries: Vec<(usize, usize, f64)> = if n == m {
        let (col_of_row, _, _) = assignment::solve(&cost, n);
        col_of_row
            .into_iter()
            .enumerate()
            .map(|(i, j)| (i, j, 1.0 / n as f64))
            .collect()
    } else {
        let g = gcd(n, m);
        let supply = vec![(m / g) as u64; n];
        let demand = vec![(n / g) as u64; m];
        let total = (n / g * m) as f64;
        flow::solve(&cost, &supply, &demand)?
            .into_iter()
            .map(|(i, j, units)| (i, j, units as f64 / total))
            .collect()
    };
    let distance: f64 = entries.iter().map(|&(i, j, w)| w * cost[i * m + j]).sum();
    if !distance.is_finite() {
        return Err(TransportError::SolverError("non-finite cost".into()));
    }
    let plan = TransportPlan {
        rows: n,
        cols: m,
        entries,
        cost: distance,
    };
    Ok((distance, plan))
}

/// Pools the position features of `trajs` and draws `n` of them without
/// replacement. When at most `n` states exist all are returned once.
pub fn subsample(
    trajs: &[FeatureTrajectory],
    n: usize,
    seed: u64,
) -> Result<EmpiricalDistribution, TransportError> {
    let pool: Vec<&[f64]> = trajs.iter().flat_map(|t| t.positions()).collect();
    subsample_points(&pool, n, seed)
}

pub(crate) fn subsample_points(
    pool: &[&[f64]],
    n: usize,
    seed: u64,
) -> Result<EmpiricalDistribution, TransportError> {
    if pool.is_empty() || n == 0 {
        return Err(TransportError::EmptyInput);
    }
    if pool.len() <= n {
        return EmpiricalDistribution::new(pool.iter().map(|p| p.to_vec()).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, pool.len(), n).into_vec();
    idx.sort_unstable();
    EmpiricalDistribution::new(idx.into_iter().map(|i| pool[i].to_vec()).collect())
}

/// Distance of one trajectory's positions to a reference distribution.
pub fn trajectory_distance(
    traj: &FeatureTrajectory,
    reference: &EmpiricalDistribution,
    cap: usize,
    seed: u64,
) -> Result<f64, TransportError> {
    let own = subsample(std::slice::from_ref(traj), cap, seed)?;
    Ok(wasserstein_exact(&own, reference)?.0)
}

/// Mean distance over all unordered pairs of demonstrations.
pub fn mean_pairwise_demo_distance(
    demos: &[FeatureTrajectory],
    cap: usize,
    seed: u64,
) -> Result<f64, TransportError> {
    if demos.len() < 2 {
        return Err(TransportError::InsufficientData(demos.len()));
    }
    let dists: Vec<EmpiricalDistribution> = demos
        .iter()
        .enumerate()
        .map(|(k, d)| subsample(std::slice::from_ref(d), cap, seed.wrapping_add(k as u64)))
        .collect::<Result<_, _>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..dists.len() {
        for j in i + 1..dists.len() {
            total += wasserstein_exact(&dists[i], &dists[j])?.0;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}
