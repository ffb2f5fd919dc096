//! Gaussian-process regression with a Matern-5/2 ARD kernel and a constant
//! mean, fitted by minimising the negative log marginal likelihood.

use std::cell::{Cell, RefCell};

use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MorphError;

pub const NOISE_FLOOR: f64 = 1e-6;
pub const DEFAULT_WINDOW: usize = 200;
const SQRT5: f64 = 2.236_067_977_499_79;
const LOG_BOX: (f64, f64) = (-9.0, 9.0);
const EVALS_PER_ITER: u64 = 20;

/// Matern-5/2 correlation at scaled distance `r`.
pub fn matern52(r: f64) -> f64 {
    (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub mean: f64,
}

impl GpHyper {
    pub fn initial(dim: usize) -> Self {
        GpHyper {
            lengthscales: vec![0.5; dim],
            signal_variance: 1.0,
            noise_variance: 1e-2,
            mean: 0.0,
        }
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_variance * matern52(self.scaled_distance(a, b))
    }

    fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct GpFitOptions {
    /// Random restarts in addition to the default starting point.
    pub restarts: usize,
    pub max_iters: u64,
    /// Keeps the noise variance at this value instead of learning it.
    pub fixed_noise: Option<f64>,
    pub window: usize,
    pub seed: u64,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        GpFitOptions {
            restarts: 5,
            max_iters: 60,
            fixed_noise: None,
            window: DEFAULT_WINDOW,
            seed: 0,
        }
    }
}

/// Fitted GP over unit-cube inputs. Targets are standardised internally.
#[derive(Clone, Debug)]
pub struct SurrogateModel {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    hyper: GpHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    degenerate: bool,
}

fn standardise(y: &[f64]) -> (Vec<f64>, f64, f64, bool) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let degenerate = !(sd > 1e-12 * mean.abs().max(1.0));
    let scale = if degenerate { 1.0 } else { sd };
    (y.iter().map(|v| (v - mean) / scale).collect(), mean, scale, degenerate)
}

fn gram(x: &[Vec<f64>], h: &GpHyper) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = h.kernel(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += h.noise_variance;
    }
    k
}

/// Negative log marginal likelihood of `y` (already standardised).
pub fn neg_log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], h: &GpHyper) -> f64 {
    nll_and_grad(x, y, h, false).map_or(f64::INFINITY, |r| r.0)
}

/// Value and gradient with respect to
/// `[log l_1.., log signal, (log excess noise), mean]`.
fn nll_and_grad(
    x: &[Vec<f64>],
    y: &[f64],
    h: &GpHyper,
    learn_noise: bool,
) -> Option<(f64, Vec<f64>)> {
    let n = x.len();
    let d = h.lengthscales.len();
    let k = gram(x, h);
    let chol = k.cholesky()?;
    let r = DVector::from_iterator(n, y.iter().map(|v| v - h.mean));
    let alpha = chol.solve(&r);
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let nll = 0.5 * r.dot(&alpha) + 0.5 * logdet + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if !nll.is_finite() {
        return None;
    }
    let kinv = chol.inverse();
    // W = alpha alpha^T - K^-1 ; dNLL/dtheta = -1/2 sum W .* dK
    let w = &alpha * alpha.transpose() - kinv;
    let mut grad = vec![0.0; d + 3];
    for i in 0..n {
        for j in 0..n {
            let wij = w[(i, j)];
            let r = h.scaled_distance(&x[i], &x[j]);
            let e = (-SQRT5 * r).exp();
            let kij = h.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e;
            grad[d] -= 0.5 * wij * kij;
            let common = h.signal_variance * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
            for (q, l) in h.lengthscales.iter().enumerate() {
                let delta = (x[i][q] - x[j][q]) / l;
                grad[q] -= 0.5 * wij * common * delta * delta;
            }
        }
    }
    let excess = h.noise_variance - NOISE_FLOOR;
    grad[d + 1] = -0.5 * w.trace() * excess;
    grad[d + 2] = -alpha.sum();
    if !learn_noise {
        grad.remove(d + 1);
    }
    Some((nll, grad))
}

struct Objective<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    fixed_noise: Option<f64>,
    best: RefCell<Option<(f64, Vec<f64>)>>,
    // Remaining evaluations for the current restart; line searches can stall.
    budget: Cell<u64>,
}

impl Objective<'_> {
    fn dim(&self) -> usize {
        self.x[0].len()
    }

    fn decode(&self, theta: &[f64]) -> GpHyper {
        let d = self.dim();
        let lengthscales = theta[..d].iter().map(|t| t.exp()).collect();
        let signal_variance = theta[d].exp();
        let (noise_variance, mean) = match self.fixed_noise {
            Some(nv) => (nv, theta[d + 1]),
            None => (NOISE_FLOOR + theta[d + 1].exp(), theta[d + 2]),
        };
        GpHyper {
            lengthscales,
            signal_variance,
            noise_variance,
            mean,
        }
    }

    fn encode(&self, h: &GpHyper) -> Vec<f64> {
        let mut t: Vec<f64> = h.lengthscales.iter().map(|l| l.ln()).collect();
        t.push(h.signal_variance.ln());
        if self.fixed_noise.is_none() {
            t.push((h.noise_variance - NOISE_FLOOR).max(1e-12).ln());
        }
        t.push(h.mean);
        t
    }

    /// Log-parameters are confined to a box; outside it the objective is the
    /// boundary value plus a quadratic wall.
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let last = theta.len() - 1;
        let mut clamped = theta.to_vec();
        let mut wall = 0.0;
        let mut wall_grad = vec![0.0; theta.len()];
        for (i, t) in clamped.iter_mut().enumerate().take(last) {
            let c = t.clamp(LOG_BOX.0, LOG_BOX.1);
            wall += 10.0 * (*t - c).powi(2);
            wall_grad[i] = 20.0 * (*t - c);
            *t = c;
        }
        let h = self.decode(&clamped);
        match nll_and_grad(self.x, self.y, &h, self.fixed_noise.is_none()) {
            Some((v, g)) => {
                if wall == 0.0 {
                    let mut best = self.best.borrow_mut();
                    if best.as_ref().is_none_or(|b| v < b.0) {
                        *best = Some((v, clamped.clone()));
                    }
                }
                let g = g
                    .iter()
                    .zip(&wall_grad)
                    .zip(theta.iter().zip(&clamped))
                    .map(|((gi, wg), (t, c))| if t == c { gi + wg } else { *wg })
                    .collect();
                (v + wall, g)
            }
            None => (1e10 + wall, wall_grad),
        }
    }
}

impl Objective<'_> {
    fn spend(&self) -> Result<(), argmin::core::Error> {
        let left = self.budget.get();
        if left == 0 {
            return Err(argmin::core::Error::msg("evaluation budget exhausted"));
        }
        self.budget.set(left - 1);
        Ok(())
    }
}

impl CostFunction for &Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Self::Param) -> Result<f64, argmin::core::Error> {
        self.spend()?;
        Ok(self.eval(p).0)
    }
}

impl Gradient for &Objective<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, p: &Self::Param) -> Result<Vec<f64>, argmin::core::Error> {
        self.spend()?;
        Ok(self.eval(p).1)
    }
}

impl SurrogateModel {
    /// Builds the posterior for fixed hyperparameters. `standardise`
    /// controls whether targets are centred and scaled first.
    pub fn with_hyper(
        x: Vec<Vec<f64>>,
        y: &[f64],
        hyper: GpHyper,
        standardise_targets: bool,
    ) -> Result<Self, MorphError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(MorphError::InsufficientData(x.len()));
        }
        let (ys, y_mean, y_scale, degenerate) = if standardise_targets {
            standardise(y)
        } else {
            (y.to_vec(), 0.0, 1.0, false)
        };
        let chol = gram(&x, &hyper)
            .cholesky()
            .ok_or_else(|| MorphError::Gp("kernel matrix is not positive definite".into()))?;
        let r = DVector::from_iterator(ys.len(), ys.iter().map(|v| v - hyper.mean));
        let alpha = chol.solve(&r);
        Ok(SurrogateModel {
            x,
            y: ys,
            y_mean,
            y_scale,
            hyper,
            chol,
            alpha,
            degenerate,
        })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    /// True when all targets were equal and the fit fell back to the noise
    /// floor scale.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn training_inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// Negative log marginal likelihood of the standardised targets.
    pub fn nll(&self) -> f64 {
        neg_log_marginal_likelihood(&self.x, &self.y, &self.hyper)
    }

    pub fn nll_at(&self, hyper: &GpHyper) -> f64 {
        neg_log_marginal_likelihood(&self.x, &self.y, hyper)
    }

    /// Predictive mean and standard deviation of the latent function in the
    /// original target units.
    pub fn posterior(&self, grid: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = self.x.len();
        let mut means = Vec::with_capacity(grid.len());
        let mut sds = Vec::with_capacity(grid.len());
        let mut kstar = DVector::zeros(n);
        for g in grid {
            for (i, xi) in self.x.iter().enumerate() {
                kstar[i] = self.hyper.kernel(xi, g);
            }
            let mu = self.hyper.mean + kstar.dot(&self.alpha);
            let v = self.chol.l().solve_lower_triangular(&kstar).unwrap_or_else(|| kstar.clone());
            let var = (self.hyper.signal_variance - v.dot(&v)).max(0.0);
            means.push(self.y_mean + self.y_scale * mu);
            sds.push(self.y_scale * var.sqrt());
        }
        (means, sds)
    }
}

/// Fits hyperparameters by multi-start L-BFGS on the most recent
/// `opts.window` observations.
pub fn gp_fit(x: &[Vec<f64>], y: &[f64], opts: &GpFitOptions) -> Result<SurrogateModel, MorphError> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(MorphError::InsufficientData(x.len()));
    }
    let start = x.len().saturating_sub(opts.window);
    let x = &x[start..];
    let y = &y[start..];
    let (ys, _, _, degenerate) = standardise(y);
    if degenerate {
        log::debug!("constant GP targets, fitting at the noise floor");
    }
    let dim = x[0].len();
    let objective = Objective {
        x,
        y: &ys,
        fixed_noise: opts.fixed_noise,
        best: RefCell::new(None),
        budget: Cell::new(0),
    };
    let mut init = GpHyper::initial(dim);
    if let Some(nv) = opts.fixed_noise {
        init.noise_variance = nv;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![objective.encode(&init)];
    for _ in 0..opts.restarts {
        let mut h = init.clone();
        h.lengthscales = (0..dim).map(|_| 10f64.powf(rng.gen_range(-1.3..0.5))).collect();
        h.signal_variance = 10f64.powf(rng.gen_range(-0.5..0.5));
        if opts.fixed_noise.is_none() {
            h.noise_variance = NOISE_FLOOR + 10f64.powf(rng.gen_range(-4.0..-0.5));
        }
        starts.push(objective.encode(&h));
    }
    for s in starts {
        objective.eval(&s);
        objective.budget.set(opts.max_iters.saturating_mul(EVALS_PER_ITER));
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), 7);
        let res = Executor::new(&objective, solver)
            .configure(|st| st.param(s).max_iters(opts.max_iters))
            .run();
        if let Err(e) = res {
            log::debug!("GP restart stopped early: {e}");
        }
    }
    let best = objective.best.borrow().clone();
    let (_, theta) = best.ok_or_else(|| MorphError::Gp("no finite likelihood found".into()))?;
    let hyper = objective.decode(&theta);
    let mut model = SurrogateModel::with_hyper(x.to_vec(), y, hyper, true)?;
    model.degenerate = degenerate;
    Ok(model)
}
