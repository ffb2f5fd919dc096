use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coil_core::diff::{Mlp, Tape, Tensor};
use coil_core::morphopt::{gp_fit, GpFitOptions};
use coil_core::simenv::{make_env, EnvSpec};
use coil_core::transport::{wasserstein_exact, EmpiricalDistribution};

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = random_tensor(&mut rng, 256, 200);
    let b = random_tensor(&mut rng, 200, 200);
    c.bench_function("matmul_256x200x200", |bench| bench.iter(|| black_box(a.matmul(&b))));
}

fn mlp_backward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Mlp::standard(20, 6, 0);
    let x = random_tensor(&mut rng, 256, 20);
    c.bench_function("mlp_forward_backward_batch256", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape);
            let input = tape.constant(x.clone());
            let out = net.apply(&mut tape, &bound, input).unwrap();
            let sq = tape.square(out);
            let loss = tape.mean(sq);
            let grads = tape.backward(loss).unwrap();
            black_box(net.grads(&bound, &grads))
        })
    });
}

fn transport(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cloud = |n: usize| {
        EmpiricalDistribution::new(
            (0..n).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
        )
        .unwrap()
    };
    let a = cloud(500);
    let b = cloud(500);
    let mut group = c.benchmark_group("transport");
    group.sample_size(10);
    group.bench_function("wasserstein_500x500", |bench| {
        bench.iter(|| black_box(wasserstein_exact(&a, &b).unwrap().0))
    });
    group.finish();
}

fn gp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<Vec<f64>> = (0..60).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect();
    let y: Vec<f64> = x.iter().map(|p| p.iter().map(|v| (3.0 * v).sin()).sum::<f64>() + 0.05 * rng.gen::<f64>()).collect();
    let opts = GpFitOptions::default();
    let mut group = c.benchmark_group("gp");
    group.sample_size(10);
    group.bench_function("gp_fit_60x4", |bench| bench.iter(|| black_box(gp_fit(&x, &y, &opts).unwrap())));
    group.finish();
}

fn sim(c: &mut Criterion) {
    let spec = EnvSpec::preset("chain3").unwrap();
    let mut env = make_env(&spec, &spec.default_xi().unwrap()).unwrap();
    let torque = vec![0.1; env.action_dim()];
    c.bench_function("chain3_step", |bench| {
        bench.iter_batched(
            || (),
            |_| {
                let r = env.step(&torque).unwrap();
                if r.terminated {
                    env.reset(0);
                }
                black_box(r.state)
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, matmul, mlp_backward, transport, gp, sim);
criterion_main!(benches);
