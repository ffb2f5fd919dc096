use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_PARTICLES: usize = 250;
pub const DEFAULT_ITERS: usize = 250;
const INERTIA: f64 = 0.729;
const PULL: f64 = 1.49445;
const MAX_SPEED: f64 = 0.2;

/// Particle swarm maximisation over the unit cube. `objective` scores a
/// whole swarm at once. Returns the best position and value.
pub fn pso_maximize(
    dim: usize,
    particles: usize,
    iters: usize,
    seed: u64,
    mut objective: impl FnMut(&[Vec<f64>]) -> Vec<f64>,
) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let particles = particles.max(1);
    let mut pos: Vec<Vec<f64>> = (0..particles)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..particles)
        .map(|_| (0..dim).map(|_| rng.gen_range(-MAX_SPEED..MAX_SPEED)).collect())
        .collect();
    let mut best_pos = pos.clone();
    let mut best_val = objective(&pos);
    let mut g = 0;
    for i in 1..particles {
        if best_val[i] > best_val[g] {
            g = i;
        }
    }
    let (mut gbest, mut gval) = (best_pos[g].clone(), best_val[g]);
    for _ in 0..iters {
        for i in 0..particles {
            for d in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let v = INERTIA * vel[i][d]
                    + PULL * r1 * (best_pos[i][d] - pos[i][d])
                    + PULL * r2 * (gbest[d] - pos[i][d]);
                vel[i][d] = v.clamp(-MAX_SPEED, MAX_SPEED);
                pos[i][d] = (pos[i][d] + vel[i][d]).clamp(0.0, 1.0);
            }
        }
        let vals = objective(&pos);
        for i in 0..particles {
            if vals[i] > best_val[i] {
                best_val[i] = vals[i];
                best_pos[i].clone_from(&pos[i]);
                if vals[i] > gval {
                    gval = vals[i];
                    gbest.clone_from(&pos[i]);
                }
            }
        }
    }
    (gbest, gval)
}
