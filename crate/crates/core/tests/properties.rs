use proptest::prelude::*;

use liv::cli::parse_episode_spec;
use liv::objectives::{cosine, similarity};
use liv::planner::{clamp_action, mppi_weights};
use liv::worldgen::{step, Action, WorldState, MAX_DELTA};

fn vec8() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 8).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn similarity_stays_in_range(a in vec8(), b in vec8(), gamma in 0.5f64..0.999) {
        let s = similarity(&a, &b, gamma).unwrap();
        prop_assert!(s.abs() <= 1.0 / (1.0 - gamma) + 1e-9);
    }

    #[test]
    fn cosine_ignores_positive_scale(a in vec8(), b in vec8(), c in 0.01f64..100.0) {
        let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
        prop_assert!((cosine(&a, &b).unwrap() - cosine(&scaled, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mppi_weights_normalize(scores in prop::collection::vec(-100.0f64..100.0, 1..64), lambda in 0.0f64..5.0) {
        let w = mppi_weights(&scores, lambda);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn clamped_actions_are_feasible(dx in -1.0f64..1.0, dy in -1.0f64..1.0, g in -2.0f64..2.0) {
        let [x, y, grip] = clamp_action([dx, dy, g]);
        prop_assert!(x.abs() <= MAX_DELTA && y.abs() <= MAX_DELTA && (0.0..=1.0).contains(&grip));
    }

    #[test]
    fn gripper_stays_in_unit_square(x in 0.0f64..1.0, y in 0.0f64..1.0, dx in -1.0f64..1.0, dy in -1.0f64..1.0) {
        let state = WorldState { gripper_pos: [x, y], block_pos: vec![[0.5, 0.7], [0.2, 0.6]], attached: None, step_count: 0 };
        let next = step(&state, &Action::new(dx, dy, 0.0));
        prop_assert!(next.gripper_pos.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((next.gripper_pos[0] - x).abs() <= MAX_DELTA + 1e-12);
    }

    #[test]
    fn episode_ranges_expand(a in 0usize..50, len in 0usize..20) {
        let ids = parse_episode_spec(&format!("{a}-{}", a + len), 100).unwrap();
        prop_assert_eq!(ids, (a..=a + len).collect::<Vec<_>>());
    }
}
