use coil_core::diff::{sigmoid, Activation, Mlp, Tensor, TensorArchive};
use coil_core::features::{phi_trajectory, FeatureMap, Source};
use coil_core::imitation::{
    airl_reward_from_prob, collect_random_transitions, consecutive_pairs, DemoVae, Discriminator,
    IlAlgorithm, Imitation, ImitationConfig, ImitationError, InverseDynamicsModel, Plateau,
};
use coil_core::rl_sac::{Batch, Transition};
use coil_core::simenv::{make_env, EnvSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn column(values: &[f64]) -> Tensor {
    Tensor::from_vec(values.len(), 1, values.to_vec()).unwrap()
}

#[test]
fn airl_reward_is_the_logit() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut checked = 0;
    for k in 0..10 {
        let d = Discriminator::new(5, 16, 3, 1e-3, 1e-5, k);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let logits = d.logits(&x).unwrap();
        for (l, p) in logits.iter().zip(d.probabilities(&x).unwrap()) {
            let r = airl_reward_from_prob(p, false);
            assert!((r - l).abs() < 1e-9, "{r} vs {l}");
            checked += 1;
        }
    }
    assert_eq!(checked, 1000);
}

#[test]
fn airl_reward_values() {
    assert_eq!(airl_reward_from_prob(0.5, true), 0.0);
    assert!((airl_reward_from_prob(sigmoid(3.0), true) - 3.0).abs() < 1e-12);
    let grid: Vec<f64> = (1..=100).map(|i| i as f64 / 101.0).collect();
    for w in grid.windows(2) {
        assert!(airl_reward_from_prob(w[1], true) > airl_reward_from_prob(w[0], true));
    }
    let cap = airl_reward_from_prob(1.0, true);
    assert!(cap.is_finite() && (cap - ((1.0 - 1e-6f64) / 1e-6).ln()).abs() < 1e-6);
    assert!(airl_reward_from_prob(0.0, true).is_finite());
}

#[test]
fn gail_loss_falls_on_separable_data() {
    let mut d = Discriminator::new(1, 16, 3, 1e-3, 1e-5, 2);
    let expert = column(&[1.0, 1.2, 0.8, 1.5]);
    let policy = column(&[-1.0, -0.7, -1.3, -1.1]);
    let losses: Vec<f64> = (0..10).map(|_| d.gail_update(&expert, &policy).unwrap()).collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn gail_on_identical_batches_approaches_chance() {
    let mut d = Discriminator::new(2, 16, 3, 1e-3, 1e-5, 3);
    let x = Tensor::from_rows(&[[0.1, 0.4], [0.9, -0.3], [0.5, 0.5]]).unwrap();
    let mut last = 0.0;
    for _ in 0..500 {
        last = d.gail_update(&x, &x).unwrap();
        // Both halves of the loss are bounded below by ln 2.
        assert!(last >= 2.0 * std::f64::consts::LN_2 - 1e-12);
    }
    assert!(last - 2.0 * std::f64::consts::LN_2 < 1e-3);
    for p in d.probabilities(&x).unwrap() {
        assert!((p - 0.5).abs() < 0.02);
    }
}

#[test]
fn gail_swapping_batches_negates_the_logit() {
    // Overlapping classes so the optimum is finite.
    let expert = column(&[1.0, 1.0, -1.0]);
    let policy = column(&[-1.0, -1.0, 1.0]);
    let mut a = Discriminator::new(1, 1, 1, 0.05, 0.0, 4);
    let mut b = a.clone();
    for _ in 0..3000 {
        a.gail_update(&expert, &policy).unwrap();
        b.gail_update(&policy, &expert).unwrap();
    }
    let la = a.logits(&column(&[1.0, -1.0])).unwrap();
    let lb = b.logits(&column(&[1.0, -1.0])).unwrap();
    assert!((la[0] + lb[0]).abs() < 1e-3 && (la[1] + lb[1]).abs() < 1e-3, "{la:?} {lb:?}");
    assert!((la[0] - 2f64.ln()).abs() < 1e-3);
}

#[test]
fn dimension_mismatch_is_reported() {
    let mut d = Discriminator::new(3, 8, 2, 1e-3, 0.0, 0);
    let bad = column(&[1.0]);
    let good = Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
    assert!(matches!(
        d.gail_update(&good, &bad),
        Err(ImitationError::DimensionError { expected: 3, got: 1 })
    ));
    assert!(matches!(
        d.sail_update(&bad, &good),
        Err(ImitationError::DimensionError { .. })
    ));
}

#[test]
fn identical_batches_leave_only_the_penalty() {
    let mut d = Discriminator::new(2, 8, 2, 1e-3, 0.0, 5);
    let x = Tensor::from_rows(&[[0.1, 0.4], [0.9, -0.3]]).unwrap();
    let before = d.clone();
    let pen = d.clone().gradient_penalty_value(&x, &x).unwrap();
    let loss = d.sail_update(&x, &x).unwrap();
    assert!((loss - pen).abs() < 1e-12);
    let _ = before;
}

#[test]
fn unit_linear_critic_has_no_penalty() {
    let mut net = Mlp::new(&[2, 1], Activation::Identity, 0);
    net.set_params(vec![
        Tensor::from_vec(2, 1, vec![0.6, 0.8]).unwrap(),
        Tensor::row(&[0.3]),
    ])
    .unwrap();
    let mut d = Discriminator::from_net(net, 1e-3, 0.0, 0);
    let e = Tensor::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
    let p = Tensor::from_rows(&[[-1.0, 0.5], [3.0, -2.0]]).unwrap();
    assert!(d.gradient_penalty_value(&e, &p).unwrap() < 1e-12);
}

#[test]
fn critic_slope_saturates_at_one_between_point_masses() {
    let mut d = Discriminator::new(1, 32, 3, 1e-3, 0.0, 6);
    let expert = column(&[1.0; 16]);
    let policy = column(&[-1.0; 16]);
    let mut gaps = Vec::new();
    for i in 0..3000 {
        d.sail_update(&expert, &policy).unwrap();
        if i % 500 == 499 {
            let c = d.logits(&column(&[1.0, -1.0])).unwrap();
            gaps.push(c[0] - c[1]);
        }
    }
    // The optimal critic is slope-1 between the masses: a gap of 2.
    let last = *gaps.last().unwrap();
    assert!((last - 2.0).abs() < 0.25, "gaps {gaps:?}");
    assert!(gaps[0] > 0.5);

    let mut im = Imitation::new(
        ImitationConfig {
            algorithm: IlAlgorithm::Sail,
            ..Default::default()
        },
        1,
        1,
        1,
        0,
    );
    *im.discriminator_mut() = d;
    let re = im.rewards(&expert, None).unwrap();
    let rp = im.rewards(&policy, None).unwrap();
    assert!(re.iter().sum::<f64>() > rp.iter().sum::<f64>());
}

fn pendulum_env() -> coil_core::simenv::Environment {
    let spec = EnvSpec::preset("pendulum").unwrap();
    let xi = spec.default_xi().unwrap();
    make_env(&spec, &xi).unwrap()
}

#[test]
fn inverse_dynamics_recovers_torque() {
    let mut env = pendulum_env();
    let fmap = FeatureMap::for_env(&env);
    let xi = vec![0.5];
    let train = collect_random_transitions(&mut env, &fmap, &xi, 10_000, 1).unwrap();
    let test = collect_random_transitions(&mut env, &fmap, &xi, 1000, 777).unwrap();
    let state_dim = env.observation_dim() + 1;
    let mut inv = InverseDynamicsModel::new(state_dim, fmap.schema().dim(), 1, 64, 3, 1e-3, 2);
    inv.fit(&train.states, &train.next_features, &train.actions, &Plateau::default(), 3)
        .unwrap();
    let pred = inv
        .predict(
            &Tensor::from_rows(&test.states).unwrap(),
            &Tensor::from_rows(&test.next_features).unwrap(),
        )
        .unwrap();
    let mse: f64 = pred
        .data()
        .iter()
        .zip(test.actions.iter().flatten())
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / test.actions.len() as f64;
    // Unit actions span [-1, 1]; relative to the full torque range.
    let rel = mse.sqrt() / 2.0;
    assert!(rel < 0.05, "relative RMSE {rel}");
}

fn swinging_features(seed: u64, steps: usize) -> coil_core::features::FeatureTrajectory {
    let mut env = pendulum_env();
    let mut states = vec![env.reset(seed)];
    let phase = seed as f64;
    for t in 0..steps {
        let u = 2.0 * (0.15 * t as f64 + phase).sin();
        states.push(env.step(&[u]).unwrap().state);
    }
    phi_trajectory(&states, &env, seed as usize, Source::Expert).unwrap()
}

#[test]
fn vae_beats_an_untrained_copy_on_held_out_demos() {
    let train: Vec<_> = (0..4).map(|s| swinging_features(s, 150)).collect();
    let held = [swinging_features(11, 150)];
    let dim = train[0].schema().dim();
    let mut vae = DemoVae::new(dim, 8, 64, 3, 1e-3, 0);
    let fresh = vae.clone();
    let (c, n) = consecutive_pairs(&train);
    vae.fit(&c, &n, &Plateau::default(), 1).unwrap();
    let (hc, hn) = consecutive_pairs(&held);
    let x = Tensor::from_rows(&hc).unwrap();
    let y = Tensor::from_rows(&hn).unwrap();
    let after = vae.reconstruction_error(&x, &y).unwrap();
    let before = fresh.reconstruction_error(&x, &y).unwrap();
    assert!(after < before, "{after} vs {before}");
    assert!(vae.is_trained() && !fresh.is_trained());
}

fn fake_batch(rows: usize, obs: usize, feat: usize, act: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(rows as u64);
    let ts: Vec<Transition> = (0..rows)
        .map(|_| Transition {
            obs: (0..obs).map(|_| rng.gen()).collect(),
            action: (0..act).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            next_obs: (0..obs).map(|_| rng.gen()).collect(),
            xi: vec![0.5],
            reward: 0.0,
            done: false,
            features: (0..feat).map(|_| rng.gen()).collect(),
            next_features: (0..feat).map(|_| rng.gen()).collect(),
        })
        .collect();
    Batch::from_transitions(&ts)
}

#[test]
fn prior_requires_pretraining_and_uses_inverse_dynamics() {
    let mut env = pendulum_env();
    let fmap = FeatureMap::for_env(&env);
    let dim = fmap.schema().dim();
    let cfg = ImitationConfig {
        hidden: 16,
        random_steps: 500,
        plateau: Plateau {
            max_epochs: 5,
            ..Plateau::default()
        },
        ..ImitationConfig::default()
    };
    let obs = env.observation_dim();
    let mut im = Imitation::new(cfg, dim, obs + 1, 1, 9);
    let batch = fake_batch(8, obs, dim, 1);
    assert!(matches!(im.prior_targets(&batch), Err(ImitationError::NotPretrained)));
    let demos = vec![swinging_features(0, 60)];
    im.pretrain(&mut env, &fmap, &[0.5], &demos, 4).unwrap();
    let p = im.prior_targets(&batch).unwrap().unwrap();
    assert_eq!(p.sigma, 1.0);
    let target = im.vae().unwrap().predict(&batch.features).unwrap();
    let direct = im
        .inverse()
        .unwrap()
        .predict(&batch.inputs, &target)
        .unwrap()
        .map(|a| a.clamp(-1.0, 1.0));
    assert_eq!(p.centres, direct);

    let gail = Imitation::new(
        ImitationConfig {
            algorithm: IlAlgorithm::Gail,
            hidden: 16,
            ..ImitationConfig::default()
        },
        dim,
        obs + 1,
        1,
        0,
    );
    assert!(gail.prior_targets(&batch).unwrap().is_none());
}

#[test]
fn imitation_checkpoint_round_trip() {
    let cfg = ImitationConfig {
        hidden: 8,
        ..ImitationConfig::default()
    };
    let mut im = Imitation::new(cfg.clone(), 4, 3, 1, 0);
    let x = Tensor::from_rows(&[[0.1, 0.2, 0.3, 0.4]]).unwrap();
    let y = Tensor::from_rows(&[[0.4, 0.1, -0.3, 0.0]]).unwrap();
    im.update(&x, &y).unwrap();
    let mut ar = TensorArchive::new();
    im.save(&mut ar, "im");
    let mut other = Imitation::new(cfg, 4, 3, 1, 42);
    other.load(&TensorArchive::from_text(&ar.to_text()).unwrap(), "im").unwrap();
    assert_eq!(other.rewards(&x, None).unwrap(), im.rewards(&x, None).unwrap());
    assert!(other.is_pretrained());
}

#[test]
fn recentred_rewards_track_a_running_mean() {
    let cfg = ImitationConfig {
        hidden: 8,
        recentre_reward: true,
        ..ImitationConfig::default()
    };
    let mut im = Imitation::new(cfg, 1, 1, 1, 0);
    let x = column(&[0.3; 50]);
    let r = im.rewards(&x, None).unwrap();
    assert_eq!(r[0], 0.0);
    assert!(r.iter().all(|v| v.abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_penalty_is_nonnegative(
        seed in 0u64..500,
        e in proptest::collection::vec(-3.0f64..3.0, 6),
        p in proptest::collection::vec(-3.0f64..3.0, 6),
    ) {
        let mut d = Discriminator::new(2, 8, 3, 1e-3, 0.0, seed);
        let e = Tensor::from_vec(3, 2, e).unwrap();
        let p = Tensor::from_vec(3, 2, p).unwrap();
        prop_assert!(d.gradient_penalty_value(&e, &p).unwrap() >= 0.0);
    }

    #[test]
    fn sail_reward_orders_like_the_critic(seed in 0u64..500, xs in proptest::collection::vec(-3.0f64..3.0, 10)) {
        let mut im = Imitation::new(ImitationConfig { hidden: 8, ..Default::default() }, 1, 1, 1, seed);
        let x = column(&xs);
        let r = im.rewards(&x, None).unwrap();
        let c = im.discriminator().logits(&x).unwrap();
        prop_assert_eq!(r, c);
    }
}
