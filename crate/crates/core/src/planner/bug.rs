//! Boundary-following bug planner: head straight for the goal while the way
//! is clear, otherwise follow the obstacle surface at a fixed standoff
//! until the corridor to the goal opens up.

use super::{nearest_accel, nearest_turn_rate, Planner};
use crate::env::Action;
use crate::sensing::{LidarConfig, Observation};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

const SPEED_DIRECTION_FLOOR: f64 = 1e-3;
/// Gain turning standoff error (m) into lateral steering bias.
const STANDOFF_GAIN: f64 = 0.5;
const MAX_STANDOFF_BIAS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BugParams {
    /// Distance to hold from the obstacle surface while following, m.
    pub standoff: f64,
    /// Commanded speed while following a boundary, m/s.
    pub follow_speed: f64,
    /// Commanded speed when the way to the goal is clear, m/s.
    pub approach_speed: f64,
    /// Reflection points used for the tangent fit.
    pub tangent_points: usize,
}

impl Default for BugParams {
    fn default() -> Self {
        BugParams {
            standoff: 5.0,
            // 0.4 * v_max with the default 2 m/s speed cap.
            follow_speed: 0.8,
            approach_speed: 2.0,
            tangent_points: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BugMode {
    GoToGoal,
    Follow,
}

/// The corridor to the goal is clear when no reflection point falls inside
/// the rectangle of half-width `standoff` around the robot-to-goal segment,
/// truncated at the LiDAR range.
fn goal_corridor_clear(points: &[Vec2], goal: Vec2, standoff: f64, max_range: f64) -> bool {
    let dist = goal.norm();
    if dist == 0.0 {
        return true;
    }
    let dir = goal / dist;
    let length = dist.min(max_range);
    !points.iter().any(|p| {
        let along = p.dot(dir);
        let lateral = p.cross(dir).abs();
        along >= 0.0 && along <= length && lateral < standoff
    })
}

/// Principal direction of a point cloud (unit vector, sign unresolved).
fn principal_direction(points: &[Vec2]) -> Option<Vec2> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec2::ZERO, |a, &p| a + p) / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - centroid;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    if sxx + syy < 1e-12 {
        return None;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(Vec2::from_angle(angle))
}

/// One bug-algorithm decision. Mutates `mode` between goal seeking and
/// boundary following based on the corridor test.
pub fn ba_action(
    obs: &Observation,
    steering_speed: f64,
    mode: &mut BugMode,
    params: &BugParams,
    lidar: &LidarConfig,
    dt: f64,
) -> Action {
    let points = obs.reflections(lidar);
    let clear = goal_corridor_clear(&points, obs.goal, params.standoff, lidar.max_range);
    *mode = if clear { BugMode::GoToGoal } else { BugMode::Follow };

    let motion_dir = if obs.velocity.norm() < SPEED_DIRECTION_FLOOR {
        Vec2::new(1.0, 0.0)
    } else {
        obs.velocity.normalized()
    };

    let (desired_dir, target_speed) = match *mode {
        BugMode::GoToGoal => {
            let dir = obs.goal.normalized();
            // Slow down when badly misaligned so the turn radius stays
            // inside the goal circle instead of orbiting it.
            let alignment = obs.goal.angle().cos().max(0.0);
            (dir, params.approach_speed * alignment)
        }
        BugMode::Follow => {
            let mut nearest: Vec<Vec2> = points.clone();
            nearest.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
            nearest.truncate(params.tangent_points);
            let closest = nearest[0];
            let tangent = principal_direction(&nearest)
                .unwrap_or_else(|| closest.normalized().perp());
            // Orient the tangent for forward progress when it helps,
            // otherwise keep the obstacle to the left.
            let goal_dir = obs.goal.normalized();
            let progress = tangent.dot(goal_dir);
            let tangent = if progress.abs() > 1e-9 {
                tangent * progress.signum()
            } else if tangent.cross(closest.normalized()) >= 0.0 {
                tangent
            } else {
                -tangent
            };
            // Regulate the standoff: bias away when too close, inward when
            // too far.
            let error = params.standoff - closest.norm();
            let bias = (error * STANDOFF_GAIN).clamp(-MAX_STANDOFF_BIAS, MAX_STANDOFF_BIAS);
            let away = -closest.normalized();
            ((tangent + away * bias).normalized(), params.follow_speed)
        }
    };

    let turn_rate = nearest_turn_rate(desired_dir.angle() - motion_dir.angle(), dt);
    let accel = nearest_accel((target_speed - steering_speed) / dt);
    Action { accel, turn_rate }
}

/// Bug planner instance holding the per-episode mode latch.
pub struct BugPlanner {
    pub params: BugParams,
    pub lidar: LidarConfig,
    pub dt: f64,
    mode: BugMode,
}

impl BugPlanner {
    pub fn new(params: BugParams, lidar: LidarConfig, dt: f64) -> Self {
        BugPlanner {
            params,
            lidar,
            dt,
            mode: BugMode::GoToGoal,
        }
    }

    pub fn mode(&self) -> BugMode {
        self.mode
    }
}

impl Planner for BugPlanner {
    fn begin_episode(&mut self, _seed: u64) {
        self.mode = BugMode::GoToGoal;
    }

    fn act(&mut self, obs: &Observation, steering_speed: f64) -> Action {
        let mut mode = self.mode;
        let action = ba_action(obs, steering_speed, &mut mode, &self.params, &self.lidar, self.dt);
        self.mode = mode;
        action
    }
}
