use proptest::prelude::*;
use trb_core::synth::GenConfig;
use trb_core::{fit_normalizer, from_target_frame, generate_dataset, to_target_frame, PoseTransform, Scene, Vec2};

fn scene(seed: u64) -> Scene {
    let cfg = GenConfig {
        scenes: 1,
        seed,
        future_len: 20,
        ..GenConfig::default()
    };
    generate_dataset(&cfg).unwrap().remove(0)
}

fn coord() -> impl Strategy<Value = f64> {
    -5000.0..5000.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn local_then_world_is_identity(tx in coord(), ty in coord(), rot in -10.0..10.0f64, px in coord(), py in coord()) {
        let tf = PoseTransform { translation: Vec2::new(tx, ty), rotation: rot };
        let p = Vec2::new(px, py);
        prop_assert!(tf.apply(tf.to_local(p)).distance(p) < 1e-9);
        prop_assert!(tf.inverse().apply(tf.apply(p)).distance(p) < 1e-9);
    }

    #[test]
    fn normalizer_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e4..1e4f64, 5), 2..40),
                             probe in prop::collection::vec(-1e4..1e4f64, 5)) {
        let n = fit_normalizer(&rows).unwrap();
        let back = n.denormalize(&n.normalize(&probe));
        for (a, b) in back.iter().zip(&probe) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn target_frame_round_trip(seed in any::<u64>()) {
        let s = scene(seed);
        for target in &s.targets {
            let (local, tf) = to_target_frame(&s, *target).unwrap();
            let cur = local.track(*target).unwrap().current();
            prop_assert_eq!(cur.position, Vec2::ZERO);
            prop_assert_eq!(cur.heading, 0.0);
            for (tw, tl) in s.tracks.iter().zip(&local.tracks) {
                let world: Vec<Vec2> = tw.states.iter().map(|st| st.position).collect();
                let pts: Vec<Vec2> = tl.states.iter().map(|st| st.position).collect();
                for (a, b) in from_target_frame(&tf, &pts).iter().zip(&world) {
                    prop_assert!(a.distance(*b) < 1e-9);
                }
            }
            for (pw, pl) in s.road.polylines.iter().zip(&local.road.polylines) {
                for (a, b) in from_target_frame(&tf, &pl.points).iter().zip(&pw.points) {
                    prop_assert!(a.distance(*b) < 1e-9);
                }
            }
        }
    }
}
