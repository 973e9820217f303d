use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::task::TaskSpec;
use super::{rng_from_seed, Rng};
use crate::error::{Error, Result};

/// Per-axis displacement limit of one action.
pub const MAX_DELTA: f64 = 0.08;
/// A block within this distance of the gripper can be picked up.
pub const GRASP_RADIUS: f64 = 0.06;
/// A detached block strictly within this distance of its zone center counts as placed.
pub const SUCCESS_RADIUS: f64 = 0.08;
/// The expert opens the gripper once within this distance of the zone center.
pub const RELEASE_RADIUS: f64 = 0.05;
pub const START_GRIPPER: [f64; 2] = [0.5, 0.95];

const NUM_BLOCKS: usize = 2;
const MIN_BLOCK_SEPARATION: f64 = 0.15;
const MAX_PLACEMENT_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub grip: f64,
}

impl Action {
    pub const fn new(dx: f64, dy: f64, grip: f64) -> Self {
        Action { dx, dy, grip }
    }

    pub fn grip_active(&self) -> bool {
        self.grip >= 0.5
    }

    /// Displacements clamped to `±MAX_DELTA`; grip untouched.
    pub fn clamped(&self) -> Action {
        Action {
            dx: self.dx.clamp(-MAX_DELTA, MAX_DELTA),
            dy: self.dy.clamp(-MAX_DELTA, MAX_DELTA),
            grip: self.grip,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.dx, self.dy, self.grip]
    }

    pub fn from_slice(v: &[f64]) -> Action {
        Action::new(v[0], v[1], v[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub gripper_pos: [f64; 2],
    pub block_pos: Vec<[f64; 2]>,
    pub attached: Option<usize>,
    pub step_count: u64,
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn clamp_unit(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

pub fn init_episode(seed: u64, task: &TaskSpec) -> Result<WorldState> {
    init_episode_with(&mut rng_from_seed(seed), task)
}

/// Draws an initial state from an episode stream. The stream is left positioned
/// after the placement draws so later per-step noise continues from it.
pub fn init_episode_with(rng: &mut Rng, task: &TaskSpec) -> Result<WorldState> {
    TaskSpec::get(task.task_id)?;
    let mut blocks: Vec<[f64; 2]> = Vec::with_capacity(NUM_BLOCKS);
    let mut rejections = 0;
    while blocks.len() < NUM_BLOCKS {
        let candidate = [rng.random_range(0.1..=0.9), rng.random_range(0.55..=0.9)];
        if blocks
            .iter()
            .all(|b| distance(*b, candidate) >= MIN_BLOCK_SEPARATION)
        {
            blocks.push(candidate);
        } else {
            rejections += 1;
            if rejections >= MAX_PLACEMENT_REJECTIONS {
                return Err(Error::Generation(format!(
                    "block placement rejected {rejections} times"
                )));
            }
        }
    }
    Ok(WorldState {
        gripper_pos: START_GRIPPER,
        block_pos: blocks,
        attached: None,
        step_count: 0,
    })
}

/// Ground-truth kinematics: move, carry, then grasp or release.
pub fn step(state: &WorldState, action: &Action) -> WorldState {
    let a = action.clamped();
    let mut next = state.clone();
    next.gripper_pos = clamp_unit([state.gripper_pos[0] + a.dx, state.gripper_pos[1] + a.dy]);
    if let Some(i) = next.attached {
        next.block_pos[i] = next.gripper_pos;
    }
    if a.grip_active() {
        if next.attached.is_none() {
            let nearest = next
                .block_pos
                .iter()
                .enumerate()
                .map(|(i, b)| (i, distance(*b, next.gripper_pos)))
                .filter(|(_, d)| *d <= GRASP_RADIUS)
                .min_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((i, _)) = nearest {
                next.attached = Some(i);
                next.block_pos[i] = next.gripper_pos;
            }
        }
    } else {
        next.attached = None;
    }
    next.step_count += 1;
    next
}

pub fn is_success(state: &WorldState, task: &TaskSpec) -> bool {
    let block = task.block_index();
    state.attached != Some(block)
        && distance(state.block_pos[block], task.zone_center()) < SUCCESS_RADIUS
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with(gripper: [f64; 2], blocks: Vec<[f64; 2]>) -> WorldState {
        WorldState {
            gripper_pos: gripper,
            block_pos: blocks,
            attached: None,
            step_count: 0,
        }
    }

    #[test]
    fn init_is_deterministic_and_starts_at_top() {
        let task = TaskSpec::get(0).unwrap();
        let a = init_episode(0, &task).unwrap();
        assert_eq!(a, init_episode(0, &task).unwrap());
        assert_eq!(a.gripper_pos, [0.5, 0.95]);
        assert_eq!(a.attached, None);
        let b = init_episode(1, &task).unwrap();
        assert_ne!(a.block_pos, b.block_pos);
    }

    #[test]
    fn init_respects_placement_box_and_separation() {
        let task = TaskSpec::get(2).unwrap();
        for seed in 0..500 {
            let s = init_episode(seed, &task).unwrap();
            for b in &s.block_pos {
                assert!((0.1..=0.9).contains(&b[0]) && (0.55..=0.9).contains(&b[1]));
            }
            assert!(distance(s.block_pos[0], s.block_pos[1]) >= 0.15);
        }
    }

    #[test]
    fn null_action_only_advances_step_count() {
        let s = state_with([0.3, 0.3], vec![[0.7, 0.7], [0.9, 0.6]]);
        let n = step(&s, &Action::new(0.0, 0.0, 0.0));
        assert_eq!(n.gripper_pos, s.gripper_pos);
        assert_eq!(n.block_pos, s.block_pos);
        assert_eq!(n.step_count, 1);
    }

    #[test]
    fn motion_is_clamped_to_unit_square() {
        let s = state_with([0.99, 0.5], vec![[0.2, 0.7], [0.5, 0.7]]);
        let n = step(&s, &Action::new(0.08, 0.0, 0.0));
        assert_eq!(n.gripper_pos, [1.0, 0.5]);
        let n = step(&s, &Action::new(5.0, -5.0, 0.0));
        assert_eq!(n.gripper_pos, [1.0, 0.42]);
    }

    #[test]
    fn grasp_carry_release() {
        let s = state_with([0.4, 0.6], vec![[0.4, 0.6], [0.8, 0.8]]);
        let held = step(&s, &Action::new(0.0, 0.0, 1.0));
        assert_eq!(held.attached, Some(0));
        let moved = step(&held, &Action::new(-0.05, -0.05, 1.0));
        assert_eq!(moved.block_pos[0], moved.gripper_pos);
        let dropped = step(&moved, &Action::new(0.0, 0.0, 0.2));
        assert_eq!(dropped.attached, None);
        assert_eq!(dropped.block_pos[0], moved.gripper_pos);
    }

    #[test]
    fn grasp_picks_nearest_block_in_radius() {
        let s = state_with([0.5, 0.5], vec![[0.55, 0.5], [0.47, 0.5]]);
        assert_eq!(step(&s, &Action::new(0.0, 0.0, 1.0)).attached, Some(1));
        let far = state_with([0.5, 0.5], vec![[0.57, 0.5], [0.2, 0.5]]);
        assert_eq!(step(&far, &Action::new(0.0, 0.0, 1.0)).attached, None);
    }

    #[test]
    fn success_needs_radius_and_release() {
        let task = TaskSpec::get(0).unwrap();
        let zone = task.zone_center();
        let mut s = state_with([0.9, 0.9], vec![zone, [0.8, 0.8]]);
        assert!(is_success(&s, &task));
        s.block_pos[0] = [zone[0] + 0.081, zone[1]];
        assert!(!is_success(&s, &task));
        s.block_pos[0] = zone;
        s.gripper_pos = zone;
        s.attached = Some(0);
        assert!(!is_success(&s, &task));
    }
}
