use super::tensor::Tensor;
use super::DiffError;

/// Adam with bias correction and optional decoupled weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

pub const DEFAULT_LR: f64 = 3e-4;

impl Adam {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        let zeros = |p: &Tensor| Tensor::zeros(p.rows(), p.cols());
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            t: 0,
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    pub fn restore(&mut self, m: Vec<Tensor>, v: Vec<Tensor>, t: u64) -> Result<(), DiffError> {
        let same = |a: &[Tensor], b: &[Tensor]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape())
        };
        if !same(&m, &self.m) || !same(&v, &self.v) {
            return Err(DiffError::Shape("optimizer moments do not match parameters".into()));
        }
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(())
    }

    /// One update. A non-finite gradient skips the whole step and is reported.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), DiffError> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(DiffError::Shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(DiffError::Shape("gradient shape differs from parameter".into()));
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            log::warn!("skipping optimizer step: non-finite gradient");
            return Err(DiffError::NonFiniteGradient);
        }
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((x, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *x -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *x);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_leaves_params() {
        let mut p = vec![Tensor::row(&[1.0, -2.0])];
        let mut opt = Adam::new(&p, 1e-3);
        for _ in 0..5 {
            opt.step(&mut p, &[Tensor::zeros(1, 2)]).unwrap();
        }
        assert_eq!(p[0].data(), &[1.0, -2.0]);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut p = vec![Tensor::row(&[0.0, 0.0])];
        let mut opt = Adam::new(&p, 1e-2);
        for _ in 0..100 {
            opt.step(&mut p, &[Tensor::row(&[2.0, -0.5])]).unwrap();
        }
        assert!(p[0].data()[0] < 0.0);
        assert!(p[0].data()[1] > 0.0);
    }

    #[test]
    fn first_step_closed_form() {
        // t=1: m = (1-b1) g, v = (1-b2) g^2, mhat = g, vhat = g^2
        // x1 = x0 - lr * g / (|g| + eps)
        let (x0, g, lr) = (0.7, -0.3, 0.01);
        let mut p = vec![Tensor::scalar(x0)];
        let mut opt = Adam::new(&p, lr);
        opt.step(&mut p, &[Tensor::scalar(g)]).unwrap();
        let expect = x0 - lr * g / (g.abs() + 1e-8);
        assert!((p[0].item() - expect).abs() < 1e-15);

        // second step with the same gradient: moments are still exactly g and g^2
        // after bias correction.
        opt.step(&mut p, &[Tensor::scalar(g)]).unwrap();
        let b1: f64 = 0.9;
        let b2: f64 = 0.999;
        let m2 = (1.0 - b1) * g * (1.0 + b1);
        let v2 = (1.0 - b2) * g * g * (1.0 + b2);
        let step2 = (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + 1e-8);
        assert!((p[0].item() - (expect - lr * step2)).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_shrinks_toward_zero() {
        let mut p = vec![Tensor::scalar(1.0)];
        let mut opt = Adam::new(&p, 0.1).with_weight_decay(0.5);
        opt.step(&mut p, &[Tensor::scalar(0.0)]).unwrap();
        assert!((p[0].item() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut p = vec![Tensor::scalar(1.0)];
        let mut opt = Adam::new(&p, 0.1);
        let err = opt.step(&mut p, &[Tensor::scalar(f64::NAN)]);
        assert!(matches!(err, Err(DiffError::NonFiniteGradient)));
        assert_eq!(p[0].item(), 1.0);
        assert_eq!(opt.steps(), 0);
    }
}
