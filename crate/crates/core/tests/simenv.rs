use coil_core::simenv::{make_env, EnvSpec, MorphologyVector, SimError, SimState};
use proptest::prelude::*;

fn default_env(spec: &EnvSpec) -> coil_core::simenv::Environment {
    make_env(spec, &spec.default_xi().unwrap()).unwrap()
}

#[test]
fn morphology_dimensions_follow_limb_layout() {
    let three = EnvSpec::chain(3);
    let env = default_env(&three);
    assert_eq!(env.morphology().len(), 6);
    let two = EnvSpec::chain(2);
    assert_eq!(default_env(&two).morphology().len(), 4);
}

#[test]
fn out_of_bounds_morphology_is_rejected() {
    let spec = EnvSpec::chain(3);
    let mut params = spec.default_morphology.clone();
    params[0] = 0.0;
    let err = MorphologyVector::new(params, spec.bounds.clone()).unwrap_err();
    assert!(matches!(err, SimError::BoundsViolation { index: 0, .. }));

    // A vector carrying looser bounds than the spec is still checked.
    let mut loose = spec.bounds.clone();
    loose[1] = (1e-6, 10.0);
    let mut params = spec.default_morphology.clone();
    params[1] = 5.0;
    let xi = MorphologyVector::new(params, loose).unwrap();
    assert!(matches!(
        make_env(&spec, &xi),
        Err(SimError::BoundsViolation { index: 1, .. })
    ));
}

#[test]
fn wrong_morphology_dimension_is_rejected() {
    let spec = EnvSpec::chain(3);
    let xi = EnvSpec::chain(2).default_xi().unwrap();
    assert!(matches!(
        make_env(&spec, &xi),
        Err(SimError::DimensionError { expected: 6, got: 4 })
    ));
}

#[test]
fn reset_is_deterministic_and_small() {
    for spec in [EnvSpec::chain(3), EnvSpec::pendulum(), EnvSpec::biped()] {
        let mut env = default_env(&spec);
        let a = env.reset(7);
        let b = env.reset(7);
        assert_eq!(a, b);
        assert!(a.joint_angles.iter().all(|x| x.abs() <= 0.01));
        assert_eq!(a.base_velocity, [0.0, 0.0]);
        assert!(a.joint_velocities.iter().all(|&v| v == 0.0));
        assert_ne!(a, env.reset(8));
    }
}

#[test]
fn zero_gravity_rest_is_an_equilibrium() {
    let mut spec = EnvSpec::chain(3);
    spec.gravity = 0.0;
    let mut env = default_env(&spec);
    let s0 = env.reset(3);
    let zero = vec![0.0; env.action_dim()];
    let mut s = s0.clone();
    for _ in 0..20 {
        s = env.step(&zero).unwrap().state;
    }
    let mut expect = s0;
    expect.step = 20;
    assert_eq!(s, expect);
}

/// Rigid rod on a pivot: `I_p * th'' = -m g (L/2) sin th - c th'`.
fn rk4_pendulum(spec: &EnvSpec, length: f64, th0: f64, dt: f64, steps: usize) -> Vec<f64> {
    let m = spec.density * length;
    let inertia = m * length * length / 3.0 + spec.armature;
    let f = |th: f64, w: f64| -> (f64, f64) {
        (
            w,
            (-m * spec.gravity * 0.5 * length * th.sin() - spec.joint_damping * w) / inertia,
        )
    };
    let h = dt / 50.0;
    let (mut th, mut w) = (th0, 0.0);
    let mut out = Vec::new();
    for _ in 0..steps {
        for _ in 0..50 {
            let k1 = f(th, w);
            let k2 = f(th + 0.5 * h * k1.0, w + 0.5 * h * k1.1);
            let k3 = f(th + 0.5 * h * k2.0, w + 0.5 * h * k2.1);
            let k4 = f(th + h * k3.0, w + h * k3.1);
            th += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            w += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        out.push(th);
    }
    out
}

#[test]
fn pendulum_free_swing_matches_reference_integrator() {
    let spec = EnvSpec::pendulum();
    let mut env = default_env(&spec);
    let mut s = env.reset(0);
    s.joint_angles[0] = 0.05;
    env.set_state(&s).unwrap();
    let reference = rk4_pendulum(&spec, spec.default_morphology[0], 0.05, spec.timestep, 100);
    let mut worst: f64 = 0.0;
    for r in reference {
        let st = env.step(&[0.0]).unwrap().state;
        worst = worst.max((st.joint_angles[0] - r).abs());
    }
    assert!(worst < 1e-3, "max deviation {worst}");
}

#[test]
fn chain_runs_full_episode_without_early_termination() {
    let spec = EnvSpec::chain(3);
    assert_eq!(spec.episode_length, 1000);
    let mut env = default_env(&spec);
    env.reset(1);
    let mut count = 0;
    loop {
        let r = env.step(&[5.0, -3.0, 1.0, -5.0, 3.0, -1.0]).unwrap();
        count += 1;
        assert!(!r.failed);
        if r.terminated {
            assert!(!r.early_termination);
            break;
        }
    }
    assert_eq!(count, 1000);
    assert!(matches!(env.step(&[0.0; 6]), Err(SimError::EpisodeFinished)));
}

#[test]
fn biped_falls_and_terminates_early() {
    let spec = EnvSpec::biped();
    let mut env = default_env(&spec);
    env.reset(0);
    let mut ended_early = false;
    for _ in 0..spec.episode_length {
        let r = env.step(&vec![0.0; env.action_dim()]).unwrap();
        if r.terminated {
            ended_early = r.early_termination;
            break;
        }
    }
    assert!(ended_early);
}

#[test]
fn non_finite_action_is_rejected() {
    let mut env = default_env(&EnvSpec::pendulum());
    env.reset(0);
    assert_eq!(env.step(&[f64::NAN]), Err(SimError::InvalidAction));
}

#[test]
fn rest_markers_lie_along_straight_limbs() {
    let spec = EnvSpec::chain(3);
    let env = default_env(&spec);
    let mut rest = env.state();
    rest.joint_angles.iter_mut().for_each(|a| *a = 0.0);
    let m = env.markers(&rest);
    assert_eq!(m.markers.len(), 2 * (3 + 1));
    let (_, segs) = spec.geometry(&spec.default_morphology).unwrap();
    for (l, lens) in segs.iter().enumerate() {
        let limb = m.limb(l);
        let base = limb[0].position;
        let mut depth = 0.0;
        for (k, len) in lens.iter().enumerate() {
            depth += len;
            let p = limb[k + 1].position;
            assert!((p[0] - base[0]).abs() < 1e-12);
            assert!((base[1] - p[1] - depth).abs() < 1e-12);
        }
    }
}

#[test]
fn base_marker_moves_with_the_base() {
    let spec = EnvSpec::chain(3);
    let env = default_env(&spec);
    let mut s = env.state();
    s.base_velocity = [0.7, -0.2];
    let m = env.markers(&s);
    for l in 0..2 {
        assert_eq!(m.limb(l)[0].velocity, [0.7, -0.2]);
    }
}

fn damped_energy_never_increases(spec: EnvSpec, seed: u64, kick: f64) {
    let mut env = default_env(&spec);
    let mut s = env.reset(seed);
    s.joint_velocities.iter_mut().for_each(|v| *v = kick);
    env.set_state(&s).unwrap();
    let zero = vec![0.0; env.action_dim()];
    let mut e = env.energy(&env.state());
    for _ in 0..150 {
        let r = env.step(&zero).unwrap();
        let e2 = env.energy(&r.state);
        assert!(e2 <= e + 1e-9, "energy rose from {e} to {e2}");
        e = e2;
        if r.terminated {
            break;
        }
    }
}

#[test]
fn energy_is_non_increasing_without_torque() {
    damped_energy_never_increases(EnvSpec::pendulum(), 0, 3.0);
    damped_energy_never_increases(EnvSpec::chain(3), 1, 2.0);
    damped_energy_never_increases(EnvSpec::chain(2), 2, -2.0);
    damped_energy_never_increases(EnvSpec::biped(), 3, 1.0);
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let spec = EnvSpec::chain(3);
    let run = || {
        let mut env = default_env(&spec);
        env.reset(11);
        (0..200)
            .map(|t| {
                let a: Vec<f64> = (0..6).map(|j| ((t * 7 + j * 3) as f64).sin() * 10.0).collect();
                env.step(&a).unwrap().state
            })
            .collect::<Vec<SimState>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn extreme_morphology_stays_finite() {
    let spec = EnvSpec::chain(3);
    let params: Vec<f64> = spec.bounds.iter().enumerate().map(|(i, b)| if i % 2 == 0 { b.0 } else { b.1 }).collect();
    let xi = MorphologyVector::new(params, spec.bounds.clone()).unwrap();
    let mut env = make_env(&spec, &xi).unwrap();
    env.reset(5);
    for t in 0..300 {
        let a: Vec<f64> = (0..6).map(|j| if (t / 5 + j) % 2 == 0 { 20.0 } else { -20.0 }).collect();
        let r = env.step(&a).unwrap();
        assert!(r.state.is_finite());
        assert!(!r.failed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lengthening_a_segment_shifts_downstream_rest_markers(
        limb in 0usize..2,
        seg in 0usize..3,
        delta in 0.0f64..0.1,
    ) {
        let spec = EnvSpec::chain(3);
        let base = spec.default_morphology.clone();
        let mut moved = base.clone();
        moved[limb * 3 + seg] += delta;
        let rest = |params: Vec<f64>| {
            let env = make_env(&spec, &MorphologyVector::new(params, spec.bounds.clone()).unwrap()).unwrap();
            let mut s = env.state();
            s.joint_angles.iter_mut().for_each(|a| *a = 0.0);
            s.base_position = [0.0, 1.0];
            env.markers(&s)
        };
        let a = rest(base);
        let b = rest(moved);
        for k in 0..4 {
            let pa = a.limb(limb)[k].position;
            let pb = b.limb(limb)[k].position;
            let expect = if k > seg { delta } else { 0.0 };
            prop_assert!((pa[0] - pb[0]).abs() < 1e-12);
            prop_assert!(((pa[1] - pb[1]) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn episode_never_exceeds_its_length(len in 1usize..30, seed in 0u64..100) {
        let mut spec = EnvSpec::pendulum();
        spec.episode_length = len;
        let mut env = default_env(&spec);
        env.reset(seed);
        let mut n = 0;
        while env.step(&[1.0]).map(|r| !r.terminated).unwrap_or(false) {
            n += 1;
        }
        prop_assert_eq!(n + 1, len);
        prop_assert!(env.step(&[1.0]).is_err());
    }
}

#[test]
fn two_to_three_preset_matches_two_segment_features() {
    use coil_core::features::FeatureMap;
    let two = EnvSpec::preset("chain2").unwrap();
    let three = EnvSpec::preset("chain2to3").unwrap();
    let e2 = make_env(&two, &two.default_xi().unwrap()).unwrap();
    let e3 = make_env(&three, &three.default_xi().unwrap()).unwrap();
    assert_eq!(FeatureMap::for_env(&e2).schema(), FeatureMap::for_env(&e3).schema());
    assert_eq!(FeatureMap::for_env(&e3).schema().dim(), 18);
    assert_eq!(three.redundant_segments(), vec![1, 2, 4, 5]);
    assert!(EnvSpec::preset("chain3").unwrap().redundant_segments().is_empty());
}
