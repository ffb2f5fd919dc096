use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gp::{gp_fit, GpFitOptions, SurrogateModel};
use super::{to_unit, MorphDataset, MorphError};

pub const DEFAULT_BETA: f64 = 2.0;
pub const DEFAULT_GRID: usize = 2048;

#[derive(Clone, Debug)]
pub struct BoConfig {
    pub beta: f64,
    pub grid_size: usize,
    pub fit: GpFitOptions,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            beta: DEFAULT_BETA,
            grid_size: DEFAULT_GRID,
            fit: GpFitOptions::default(),
        }
    }
}

/// Scrambled Sobol points in the unit cube plus the given extra points.
pub fn candidate_grid(dim: usize, m: usize, seed: u64, extra: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let scramble = (seed ^ (seed >> 32)) as u32;
    let mut grid: Vec<Vec<f64>> = (0..m as u32)
        .map(|i| {
            (0..dim as u32)
                .map(|d| sobol_burley::sample(i, d, scramble) as f64)
                .collect()
        })
        .collect();
    grid.extend(extra.iter().cloned());
    grid
}

/// Lower confidence bound `mean - beta * sd`.
pub fn lcb(mean: &[f64], sd: &[f64], beta: f64) -> Vec<f64> {
    mean.iter().zip(sd).map(|(m, s)| m - beta * s).collect()
}

/// Index of the smallest value; ties go to the first index in a seeded
/// shuffle of the candidates.
pub fn argmin_shuffled(values: &[f64], seed: u64) -> usize {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut best = order[0];
    for &i in &order[1..] {
        if values[i] < values[best] {
            best = i;
        }
    }
    best
}

/// Result of one acquisition round, in unit-cube coordinates.
#[derive(Clone, Debug)]
pub struct BoProposal {
    pub unit: Vec<f64>,
    pub model: SurrogateModel,
    pub grid: Vec<Vec<f64>>,
    pub acquisition: Vec<f64>,
}

/// Fits the surrogate to the completed entries of `ds` and minimises the
/// LCB over a fresh candidate grid. Requires two completed morphologies.
pub fn propose_bo_unit(
    ds: &MorphDataset,
    bounds: &[(f64, f64)],
    cfg: &BoConfig,
    seed: u64,
) -> Result<BoProposal, MorphError> {
    let (xs, ys) = ds.targets();
    if xs.len() < 2 {
        return Err(MorphError::InsufficientData(xs.len()));
    }
    let units: Vec<Vec<f64>> = xs.iter().map(|x| to_unit(x, bounds)).collect();
    let mut fit = cfg.fit.clone();
    fit.seed = seed;
    let model = gp_fit(&units, &ys, &fit)?;
    let grid = candidate_grid(bounds.len(), cfg.grid_size, seed, &units);
    let (mean, sd) = model.posterior(&grid);
    let acquisition = lcb(&mean, &sd, cfg.beta);
    let best = argmin_shuffled(&acquisition, seed);
    Ok(BoProposal {
        unit: grid[best].clone(),
        model,
        grid,
        acquisition,
    })
}
