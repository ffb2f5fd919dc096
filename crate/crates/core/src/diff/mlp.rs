use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Gradients, Tape, Var};
use super::tensor::{gemm, Operand, Tensor};
use super::DiffError;

/// Hidden-layer nonlinearity. The output layer is always affine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

pub const DEFAULT_HIDDEN: usize = 200;
pub const DEFAULT_LAYERS: usize = 3;

/// Fully connected network. Parameters are stored as `[w0, b0, w1, b1, ...]`
/// with `w_l` shaped `in x out` and `b_l` shaped `1 x out`.
#[derive(Clone, Debug)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<Tensor>,
    seed: u64,
}

/// Tape handles for one binding of an [`Mlp`]'s parameters.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    vars: Vec<Var>,
}

impl BoundMlp {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl Mlp {
    /// Fan-in uniform initialisation, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Self {
        assert!(widths.len() >= 2, "an MLP needs an input and an output width");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(2 * (widths.len() - 1));
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            let b: Vec<f64> = (0..fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
            params.push(Tensor::from_vec(fan_in, fan_out, w).expect("weight shape"));
            params.push(Tensor::row(&b));
        }
        Mlp {
            widths: widths.to_vec(),
            activation,
            params,
            seed,
        }
    }

    /// `layers` affine layers with `hidden` units between them.
    pub fn with_hidden(
        input: usize,
        hidden: usize,
        layers: usize,
        output: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        assert!(layers >= 1);
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, layers - 1));
        widths.push(output);
        Self::new(&widths, activation, seed)
    }

    /// Three ReLU layers with 200 hidden units.
    pub fn standard(input: usize, output: usize, seed: u64) -> Self {
        Self::with_hidden(
            input,
            DEFAULT_HIDDEN,
            DEFAULT_LAYERS,
            output,
            Activation::Relu,
            seed,
        )
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("nonempty widths")
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<(), DiffError> {
        if params.len() != self.params.len()
            || params
                .iter()
                .zip(&self.params)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(DiffError::Shape(
                "parameter list does not match network layout".into(),
            ));
        }
        self.params = params;
        Ok(())
    }

    /// Zeroes the final affine layer, making the network output identically zero.
    pub fn zero_output_layer(&mut self) {
        let n = self.params.len();
        for p in &mut self.params[n - 2..] {
            p.data_mut().fill(0.0);
        }
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            for (a, b) in t.data_mut().iter_mut().zip(s.data()) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
    }

    fn check_input(&self, cols: usize) -> Result<(), DiffError> {
        if cols != self.input_dim() {
            return Err(DiffError::Shape(format!(
                "network expects {} inputs, batch has {cols}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Inference without recording a tape.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor, DiffError> {
        self.check_input(batch.cols())?;
        let mut h = batch.clone();
        let layers = self.layer_count();
        for l in 0..layers {
            let w = &self.params[2 * l];
            let b = &self.params[2 * l + 1];
            let mut out = Tensor::zeros(h.rows(), w.cols());
            gemm(Operand::plain(&h), Operand::plain(w), &mut out, 0.0);
            let n = w.cols();
            for row in out.data_mut().chunks_mut(n) {
                for (x, bb) in row.iter_mut().zip(b.data()) {
                    *x += bb;
                }
            }
            if l + 1 < layers {
                apply_activation(self.activation, out.data_mut());
            }
            h = out;
        }
        Ok(h)
    }

    /// Records the parameters as gradient-receiving leaves.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            vars: self.params.iter().map(|p| tape.leaf(p.clone())).collect(),
        }
    }

    /// Records the parameters as constants (for frozen target networks).
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            vars: self.params.iter().map(|p| tape.constant(p.clone())).collect(),
        }
    }

    /// Forward pass recorded on `tape`.
    pub fn apply(&self, tape: &mut Tape, bound: &BoundMlp, x: Var) -> Result<Var, DiffError> {
        self.check_input(tape.shape(x).1)?;
        let layers = self.layer_count();
        let mut h = x;
        for l in 0..layers {
            let z = tape.matmul(h, bound.vars[2 * l]);
            let z = tape.add_row(z, bound.vars[2 * l + 1]);
            h = if l + 1 < layers {
                match self.activation {
                    Activation::Relu => tape.relu(z),
                    Activation::Tanh => tape.tanh(z),
                    Activation::Identity => z,
                }
            } else {
                z
            };
        }
        Ok(h)
    }

    /// Forward pass plus the per-sample input gradient `d out_b / d x_b` of a
    /// single-output network, both recorded on the tape so that a loss on the
    /// input gradient can itself be differentiated with respect to the
    /// parameters. ReLU masks are treated as constants (their derivative is
    /// zero almost everywhere).
    pub fn apply_with_input_grad(
        &self,
        tape: &mut Tape,
        bound: &BoundMlp,
        x: Var,
    ) -> Result<(Var, Var), DiffError> {
        self.check_input(tape.shape(x).1)?;
        if self.output_dim() != 1 {
            return Err(DiffError::Shape(
                "input gradients are defined for single-output networks".into(),
            ));
        }
        let layers = self.layer_count();
        let mut h = x;
        // Local derivative of each hidden activation, as tape values.
        let mut slopes: Vec<Var> = Vec::with_capacity(layers - 1);
        for l in 0..layers {
            let z = tape.matmul(h, bound.vars[2 * l]);
            let z = tape.add_row(z, bound.vars[2 * l + 1]);
            if l + 1 < layers {
                let (a, slope) = match self.activation {
                    Activation::Relu => {
                        let mask = tape.value(z).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                        (tape.relu(z), tape.constant(mask))
                    }
                    Activation::Tanh => {
                        let t = tape.tanh(z);
                        let sq = tape.square(t);
                        let neg = tape.neg(sq);
                        (t, tape.add_scalar(neg, 1.0))
                    }
                    Activation::Identity => {
                        let (m, n) = tape.shape(z);
                        (z, tape.constant(Tensor::filled(m, n, 1.0)))
                    }
                };
                slopes.push(slope);
                h = a;
            } else {
                h = z;
            }
        }
        let batch = tape.shape(x).0;
        let mut g = tape.constant(Tensor::filled(batch, 1, 1.0));
        for l in (0..layers).rev() {
            // d/d(input of layer l) = g * W_l^T
            g = tape.matmul_t(g, bound.vars[2 * l]);
            if l > 0 {
                g = tape.mul(g, slopes[l - 1]);
            }
        }
        Ok((h, g))
    }

    /// Parameter gradients for a binding, zeros where the loss did not reach.
    pub fn grads(&self, bound: &BoundMlp, grads: &Gradients) -> Vec<Tensor> {
        bound
            .vars
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
            .collect()
    }
}

fn apply_activation(act: Activation, data: &mut [f64]) {
    match act {
        Activation::Relu => data.iter_mut().for_each(|x| *x = x.max(0.0)),
        Activation::Tanh => data.iter_mut().for_each(|x| *x = x.tanh()),
        Activation::Identity => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_output_layer_gives_zero_output() {
        let mut net = Mlp::new(&[3, 8, 8, 2], Activation::Relu, 1);
        net.zero_output_layer();
        let x = Tensor::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.1, -0.3]).unwrap();
        assert!(net.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let mut net = Mlp::new(&[3, 3], Activation::Relu, 0);
        net.set_params(vec![Tensor::identity(3), Tensor::zeros(1, 3)]).unwrap();
        let x = Tensor::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.1, -0.3]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_set_two_two_one_network() {
        // h = relu(x W1 + b1), y = h W2 + b2
        let mut net = Mlp::new(&[2, 2, 1], Activation::Relu, 0);
        let w1 = Tensor::from_vec(2, 2, vec![1.0, -1.0, 2.0, 0.5]).unwrap();
        let b1 = Tensor::row(&[0.1, -0.2]);
        let w2 = Tensor::from_vec(2, 1, vec![3.0, -2.0]).unwrap();
        let b2 = Tensor::row(&[0.25]);
        net.set_params(vec![w1, b1, w2, b2]).unwrap();
        // x = (1, 2): pre = (1 + 4 + 0.1, -1 + 1 - 0.2) = (5.1, -0.2) -> h = (5.1, 0)
        // y = 15.3 + 0.25 = 15.55
        // x = (-1, 0.5): pre = (-1 + 1 + 0.1, 1 + 0.25 - 0.2) = (0.1, 1.05)
        // y = 0.3 - 2.1 + 0.25 = -1.55
        let x = Tensor::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let y = net.forward(&x).unwrap();
        assert!((y.get(0, 0) - 15.55).abs() < 1e-12);
        assert!((y.get(1, 0) + 1.55).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Mlp::new(&[3, 4, 1], Activation::Relu, 0);
        let x = Tensor::zeros(2, 4);
        assert!(matches!(net.forward(&x), Err(DiffError::Shape(_))));
    }

    #[test]
    fn standard_layout() {
        let net = Mlp::standard(10, 4, 3);
        assert_eq!(net.widths(), &[10, 200, 200, 4]);
        assert_eq!(net.layer_count(), 3);
        assert_eq!(
            net.param_count(),
            10 * 200 + 200 + 200 * 200 + 200 + 200 * 4 + 4
        );
    }

    #[test]
    fn seeded_initialisation_is_reproducible() {
        let a = Mlp::new(&[4, 16, 2], Activation::Tanh, 99);
        let b = Mlp::new(&[4, 16, 2], Activation::Tanh, 99);
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn tape_and_direct_forward_agree() {
        let net = Mlp::new(&[3, 7, 5, 2], Activation::Tanh, 5);
        let x = Tensor::from_vec(2, 3, vec![0.3, -1.0, 2.0, 0.1, 0.2, -0.4]).unwrap();
        let direct = net.forward(&x).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let xv = tape.constant(x);
        let out = net.apply(&mut tape, &bound, xv).unwrap();
        for (a, b) in tape.value(out).data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        for act in [Activation::Relu, Activation::Tanh] {
            let net = Mlp::new(&[3, 9, 6, 1], act, 11);
            let x = Tensor::from_vec(2, 3, vec![0.3, -1.0, 2.0, 0.15, 0.2, -0.4]).unwrap();
            let mut tape = Tape::new();
            let bound = net.bind_frozen(&mut tape);
            let xv = tape.constant(x.clone());
            let (_, g) = net.apply_with_input_grad(&mut tape, &bound, xv).unwrap();
            let g = tape.value(g).clone();
            for r in 0..2 {
                for c in 0..3 {
                    let eps = 1e-6;
                    let mut up = x.clone();
                    up.set(r, c, x.get(r, c) + eps);
                    let mut dn = x.clone();
                    dn.set(r, c, x.get(r, c) - eps);
                    let fd = (net.forward(&up).unwrap().get(r, 0)
                        - net.forward(&dn).unwrap().get(r, 0))
                        / (2.0 * eps);
                    assert!((fd - g.get(r, c)).abs() < 1e-6, "{act:?} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn soft_update_endpoints() {
        let src = Mlp::new(&[2, 3, 1], Activation::Relu, 1);
        let orig = Mlp::new(&[2, 3, 1], Activation::Relu, 2);
        let mut t = orig.clone();
        t.soft_update_from(&src, 0.0);
        assert_eq!(t.params(), orig.params());
        t.soft_update_from(&src, 1.0);
        assert_eq!(t.params(), src.params());
    }
}
