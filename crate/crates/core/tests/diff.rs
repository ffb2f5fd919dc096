use coil_core::diff::{Activation, Adam, DiffError, Mlp, Tape, Tensor, TensorArchive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn loss_of(net: &Mlp, x: &Tensor, y: &Tensor) -> f64 {
    let out = net.forward(x).unwrap();
    out.zip_map(y, |a, b| (a - b) * (a - b)).sum() / out.len() as f64
}

/// Largest relative error between tape gradients and central differences.
fn worst_gradient_error(net: &Mlp, x: &Tensor, y: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let out = net.apply(&mut tape, &bound, xv).unwrap();
    let diff = tape.sub(out, yv);
    let sq = tape.square(diff);
    let loss = tape.mean(sq);
    let grads = net.grads(&bound, &tape.backward(loss).unwrap());

    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (p, g) in net.params().iter().zip(&grads) {
        let idx = net.params().iter().position(|q| std::ptr::eq(q, p)).unwrap();
        for k in 0..p.len() {
            let orig = p.data()[k];
            probe.params_mut()[idx].data_mut()[k] = orig + eps;
            let up = loss_of(&probe, x, y);
            probe.params_mut()[idx].data_mut()[k] = orig - eps;
            let down = loss_of(&probe, x, y);
            probe.params_mut()[idx].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = g.data()[k];
            let err = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn random_networks_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let depth = rng.gen_range(1..=3);
        let widths: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=16)).collect();
        let net = Mlp::new(&widths, Activation::Tanh, k);
        let batch = rng.gen_range(1..=4);
        let x = random_tensor(&mut rng, batch, widths[0]);
        let y = random_tensor(&mut rng, batch, *widths.last().unwrap());
        worst = worst.max(worst_gradient_error(&net, &x, &y));
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn closed_form_quadratic_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random_tensor(&mut rng, 3, 4);
    let x = random_tensor(&mut rng, 4, 1);
    let mut tape = Tape::new();
    let wv = tape.leaf(w.clone());
    let xv = tape.constant(x.clone());
    let wx = tape.matmul(wv, xv);
    let sq = tape.square(wx);
    let loss = tape.sum(sq);
    let g = tape.backward(loss).unwrap();
    let expect = w.matmul(&x).map(|v| 2.0 * v).matmul(&x.transpose());
    for (a, b) in g.get(wv).unwrap().data().iter().zip(expect.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let v = tape.leaf(Tensor::row(&[1.0, 2.0]));
    assert!(matches!(tape.backward(v), Err(DiffError::Shape(_))));
}

#[test]
fn unused_parameters_get_no_gradient() {
    let a = Mlp::new(&[3, 5, 2], Activation::Relu, 1);
    let b = Mlp::new(&[3, 5, 2], Activation::Relu, 2);
    let mut tape = Tape::new();
    let ba = a.bind(&mut tape);
    let bb = b.bind(&mut tape);
    let x = tape.constant(Tensor::row(&[0.1, 0.2, 0.3]));
    let out = a.apply(&mut tape, &ba, x).unwrap();
    let loss = tape.sum(out);
    let g = tape.backward(loss).unwrap();
    for v in bb.vars() {
        assert!(g.get(*v).is_none());
    }
    assert!(b.grads(&bb, &g).iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
}

fn train_trace(seed: u64) -> Vec<f64> {
    let mut net = Mlp::new(&[2, 8, 1], Activation::Relu, seed);
    let mut opt = Adam::new(net.params(), 1e-2);
    let x = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
    let y = Tensor::from_rows(&[[1.0], [1.0], [0.0]]).unwrap();
    (0..50)
        .map(|_| {
            let mut tape = Tape::new();
            let b = net.bind(&mut tape);
            let xv = tape.constant(x.clone());
            let yv = tape.constant(y.clone());
            let o = net.apply(&mut tape, &b, xv).unwrap();
            let d = tape.sub(o, yv);
            let s = tape.square(d);
            let l = tape.mean(s);
            let value = tape.value(l).item();
            let g = net.grads(&b, &tape.backward(l).unwrap());
            opt.step(net.params_mut(), &g).unwrap();
            value
        })
        .collect()
}

#[test]
fn training_is_deterministic() {
    let a = train_trace(5);
    assert_eq!(a, train_trace(5));
    assert!(a.last().unwrap() < a.first().unwrap());
}

#[test]
fn archive_round_trips_network() {
    let net = Mlp::new(&[4, 6, 3], Activation::Tanh, 9);
    let mut archive = TensorArchive::new();
    archive.insert_all("net", net.params());
    let dir = std::env::temp_dir().join(format!("coil-diff-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("net.txt");
    archive.save(&path).unwrap();
    let back = TensorArchive::load(&path).unwrap();
    let mut restored = Mlp::new(&[4, 6, 3], Activation::Tanh, 0);
    restored.set_params(back.get_all("net")).unwrap();
    assert_eq!(restored.params(), net.params());
    std::fs::remove_dir_all(dir).ok();
}
