use coil_core::features::{
    phi, phi_trajectory, position_slice, FeatureError, FeatureMap, FeatureSchema, Source,
};
use coil_core::simenv::{make_env, EnvSpec, Environment, Marker, MarkerSet};
use proptest::prelude::*;

fn env(spec: &EnvSpec) -> Environment {
    make_env(spec, &spec.default_xi().unwrap()).unwrap()
}

#[test]
fn three_segment_feature_dimension() {
    let e = env(&EnvSpec::chain(3));
    let map = FeatureMap::for_env(&e);
    assert_eq!(map.schema().dim(), 2 * 3 * 4 + 2);
    let f = map.phi_state(&e, &e.state()).unwrap();
    assert_eq!(f.len(), 26);
    assert_eq!(position_slice(map.schema(), &f).len(), 26 - 12 - 2);
}

#[test]
fn rest_features_are_cumulative_offsets() {
    let spec = EnvSpec::chain(3);
    let e = env(&spec);
    let mut s = e.state();
    s.joint_angles.iter_mut().for_each(|a| *a = 0.0);
    let map = FeatureMap::for_env(&e);
    let f = map.phi_state(&e, &s).unwrap();
    let (_, segs) = spec.geometry(&spec.default_morphology).unwrap();
    let mut expect = Vec::new();
    for lens in &segs {
        let mut depth = 0.0;
        for l in lens {
            depth += l;
            expect.extend([0.0, -depth]);
        }
    }
    let pos = position_slice(map.schema(), &f);
    for (a, b) in pos.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(f[12..].iter().all(|&v| v == 0.0));
}

#[test]
fn selection_maps_three_segments_onto_two() {
    let mut three = EnvSpec::chain(3);
    three.feature_markers = vec![1, 3];
    let two = EnvSpec::chain(2);
    let a = FeatureMap::for_env(&env(&three));
    let b = FeatureMap::for_env(&env(&two));
    assert_eq!(a.schema(), b.schema());
    assert_eq!(a.schema().dim(), 18);
}

#[test]
fn schema_mismatch_is_reported() {
    let e = env(&EnvSpec::chain(3));
    let wrong = FeatureSchema {
        limbs: 2,
        markers_per_limb: 2,
        base_velocity: true,
    };
    assert!(matches!(
        phi(&e.current_markers(), [0.0; 2], wrong),
        Err(FeatureError::SchemaError(_))
    ));
    let wrong_limbs = FeatureSchema {
        limbs: 1,
        markers_per_limb: 3,
        base_velocity: true,
    };
    assert!(phi(&e.current_markers(), [0.0; 2], wrong_limbs).is_err());
}

#[test]
fn trajectory_length_and_errors() {
    let spec = EnvSpec::chain(3);
    let mut e = env(&spec);
    let mut states = vec![e.reset(0)];
    for _ in 0..999 {
        states.push(e.step(&[1.0; 6]).unwrap().state);
    }
    let t = phi_trajectory(&states, &e, 0, Source::Imitator).unwrap();
    assert_eq!(t.len(), 1000);
    assert_eq!(t.morphology.as_deref(), Some(spec.default_morphology.as_slice()));
    assert!(matches!(
        phi_trajectory(&[], &e, 0, Source::Expert),
        Err(FeatureError::EmptyTrajectory)
    ));
    let constant = vec![states[10].clone(); 5];
    let c = phi_trajectory(&constant, &e, 1, Source::Expert).unwrap();
    assert!(c.features().windows(2).all(|w| w[0] == w[1]));
}

fn arbitrary_markers() -> impl Strategy<Value = MarkerSet> {
    proptest::collection::vec(-5.0f64..5.0, 32).prop_map(|v| MarkerSet {
        markers: v
            .chunks(4)
            .map(|c| Marker {
                position: [c[0], c[1]],
                velocity: [c[2], c[3]],
            })
            .collect(),
        limb_starts: vec![0, 4],
    })
}

const SCHEMA: FeatureSchema = FeatureSchema {
    limbs: 2,
    markers_per_limb: 3,
    base_velocity: true,
};

proptest! {
    #[test]
    fn relative_positions_are_translation_invariant(
        m in arbitrary_markers(), dx in -10.0f64..10.0, dy in -10.0f64..10.0
    ) {
        let a = phi(&m, [0.1, 0.2], SCHEMA).unwrap();
        let b = phi(&m.translated([dx, dy]), [0.1, 0.2], SCHEMA).unwrap();
        for (x, y) in position_slice(SCHEMA, &a).iter().zip(position_slice(SCHEMA, &b)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert_eq!(&a[12..], &b[12..]);
    }

    #[test]
    fn phi_is_pure(m in arbitrary_markers()) {
        prop_assert_eq!(phi(&m, [1.0, 2.0], SCHEMA).unwrap(), phi(&m, [1.0, 2.0], SCHEMA).unwrap());
    }

    #[test]
    fn velocities_do_not_reach_the_position_slice(m in arbitrary_markers(), dv in -3.0f64..3.0) {
        let mut m2 = m.clone();
        for mk in &mut m2.markers {
            mk.velocity[0] += dv * mk.position[1];
        }
        let a = phi(&m, [0.0; 2], SCHEMA).unwrap();
        let b = phi(&m2, [dv, 0.0], SCHEMA).unwrap();
        prop_assert_eq!(position_slice(SCHEMA, &a), position_slice(SCHEMA, &b));
    }
}
