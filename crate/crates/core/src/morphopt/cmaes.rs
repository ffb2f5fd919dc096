//! (mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates
//! and cumulative step-size adaptation, for minimisation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug)]
pub struct Cmaes {
    dim: usize,
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    eigenvalues: DVector<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
    rng: ChaCha8Rng,
}

impl Cmaes {
    pub fn new(mean: &[f64], sigma: f64, seed: u64) -> Self {
        let n = mean.len();
        let lambda = 4 + (3.0 * (n as f64).ln()).floor() as usize;
        Self::with_population(mean, sigma, lambda, seed)
    }

    pub fn with_population(mean: &[f64], sigma: f64, lambda: usize, seed: u64) -> Self {
        let n = mean.len();
        let nf = n as f64;
        let lambda = lambda.max(2);
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Cmaes {
            dim: n,
            lambda,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            mean: DVector::from_column_slice(mean),
            sigma,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            eigenvalues: DVector::from_element(n, 1.0),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Samples a population of `lambda` points.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        (0..self.lambda)
            .map(|_| {
                let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(&mut self.rng));
                let y = &self.basis * z.component_mul(&self.scales);
                (&self.mean + y * self.sigma).as_slice().to_vec()
            })
            .collect()
    }

    /// Updates the distribution from evaluated points (lower is better).
    pub fn tell(&mut self, evaluated: &[(Vec<f64>, f64)]) {
        let mut ranked: Vec<&(Vec<f64>, f64)> = evaluated.iter().collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
        let n = self.dim as f64;
        let old = self.mean.clone();
        let mut step = DVector::zeros(self.dim);
        let ys: Vec<DVector<f64>> = ranked
            .iter()
            .take(self.weights.len())
            .map(|(x, _)| (DVector::from_column_slice(x) - &old) / self.sigma)
            .collect();
        for (w, y) in self.weights.iter().zip(&ys) {
            step += y * *w;
        }
        self.mean = &old + &step * self.sigma;

        // C^{-1/2} * step
        let inv_sqrt = &self.basis
            * DMatrix::from_diagonal(&self.scales.map(|s| 1.0 / s))
            * self.basis.transpose();
        self.p_sigma = &self.p_sigma * (1.0 - self.c_sigma)
            + (&inv_sqrt * &step) * (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt();
        let gen = (self.generation + 1) as f64;
        let norm_ps = self.p_sigma.norm();
        let h_sigma = norm_ps / (1.0 - (1.0 - self.c_sigma).powf(2.0 * gen)).sqrt()
            < (1.4 + 2.0 / (n + 1.0)) * self.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - self.c_c)
            + &step * (h * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt());
        let mut rank_mu = DMatrix::zeros(self.dim, self.dim);
        for (w, y) in self.weights.iter().zip(&ys) {
            rank_mu += y * y.transpose() * *w;
        }
        let delta = (1.0 - h) * self.c_c * (2.0 - self.c_c);
        self.cov = &self.cov * (1.0 - self.c_1 - self.c_mu)
            + (&self.p_c * self.p_c.transpose() + &self.cov * delta) * self.c_1
            + rank_mu * self.c_mu;
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        self.sigma *= ((self.c_sigma / self.d_sigma) * (norm_ps / self.chi_n - 1.0)).exp();
        let eig = SymmetricEigen::new(self.cov.clone());
        self.scales = eig.eigenvalues.map(|v| v.max(1e-20).sqrt());
        self.eigenvalues = eig.eigenvalues;
        self.basis = eig.eigenvectors;
        self.generation += 1;
    }

    /// Smallest eigenvalue of the current covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
