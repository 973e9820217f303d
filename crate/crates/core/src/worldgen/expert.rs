use rand::Rng as _;

use super::state::{distance, Action, WorldState, GRASP_RADIUS, MAX_DELTA, RELEASE_RADIUS};
use super::task::TaskSpec;
use super::Rng;

const EXPERT_NOISE: f64 = 0.01;

/// Scripted two-phase controller: reach and grasp the task block, carry it to
/// the zone, release. Once the block sits released in its zone the gripper
/// backs away upward so the goal frame shows the block uncovered.
///
/// Two uniform draws from `rng` perturb every displacement before clamping.
pub fn expert_action(state: &WorldState, task: &TaskSpec, rng: &mut Rng) -> Action {
    let noise = [
        rng.random_range(-EXPERT_NOISE..=EXPERT_NOISE),
        rng.random_range(-EXPERT_NOISE..=EXPERT_NOISE),
    ];
    let block = task.block_index();
    let zone = task.zone_center();
    let gripper = state.gripper_pos;

    let (target, grip) = match state.attached {
        Some(i) if i == block => {
            let grip = if distance(gripper, zone) <= RELEASE_RADIUS { 0.0 } else { 1.0 };
            (zone, grip)
        }
        Some(_) => (state.block_pos[block], 0.0),
        None if super::is_success(state, task) => {
            let retreat = [gripper[0], gripper[1] + MAX_DELTA];
            (retreat, 0.0)
        }
        None => {
            let b = state.block_pos[block];
            let grip = if distance(gripper, b) <= GRASP_RADIUS { 1.0 } else { 0.0 };
            (b, grip)
        }
    };
    Action::new(
        target[0] - gripper[0] + noise[0],
        target[1] - gripper[1] + noise[1],
        grip,
    )
    .clamped()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{episode_rng, init_episode_with, is_success, step};

    #[test]
    fn saturates_toward_distant_block() {
        let task = TaskSpec::get(0).unwrap();
        let s = WorldState {
            gripper_pos: [0.1, 0.7],
            block_pos: vec![[0.6, 0.7], [0.9, 0.9]],
            attached: None,
            step_count: 0,
        };
        let a = expert_action(&s, &task, &mut episode_rng(3, 0));
        assert_eq!(a.dx, 0.08);
        assert!(a.dy.abs() <= 0.01);
        assert_eq!(a.grip, 0.0);
    }

    #[test]
    fn releases_near_zone() {
        let task = TaskSpec::get(1).unwrap();
        let zone = task.zone_center();
        let p = [zone[0] + 0.03, zone[1] - 0.02];
        let s = WorldState {
            gripper_pos: p,
            block_pos: vec![p, [0.2, 0.8]],
            attached: Some(0),
            step_count: 10,
        };
        let a = expert_action(&s, &task, &mut episode_rng(0, 0));
        assert_eq!(a.grip, 0.0);
        let next = step(&s, &a);
        assert!(is_success(&next, &task));
    }

    #[test]
    fn expert_solves_most_episodes() {
        let mut wins = 0;
        for seed in 0..200u64 {
            let task = TaskSpec::get((seed % 4) as usize).unwrap();
            let mut rng = episode_rng(seed, 0);
            let mut s = init_episode_with(&mut rng, &task).unwrap();
            for _ in 0..39 {
                let a = expert_action(&s, &task, &mut rng);
                s = step(&s, &a);
            }
            wins += is_success(&s, &task) as usize;
        }
        assert!(wins >= 198, "expert solved {wins}/200");
    }
}
