//! Artificial potential field planner: attractive pull toward the goal,
//! repulsive push from every LiDAR reflection point, mapped onto the
//! discrete command grid.

use super::{nearest_accel, nearest_turn_rate, Planner};
use crate::env::Action;
use crate::sensing::{LidarConfig, Observation};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

/// Below this total speed the velocity direction is undefined; the heading
/// stands in for it.
const SPEED_DIRECTION_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApfParams {
    pub k_att: f64,
    pub k_rep: f64,
    /// Exponent on the goal distance inside the repulsive potential.
    pub n: i32,
    /// Force-to-acceleration scale divisor.
    pub m: f64,
    /// Repulsion influence range; beyond it obstacles exert nothing.
    pub d0: f64,
}

impl Default for ApfParams {
    fn default() -> Self {
        ApfParams {
            k_att: 50.0,
            k_rep: 500.0,
            n: 2,
            m: 500.0,
            d0: 10.0,
        }
    }
}

/// Total force at the robot (robot frame, robot at the origin).
///
/// Attractive: `-grad(1/2 k_att d^2(X, X_g)) = k_att (X_g - X)`.
/// Repulsive, per reflection point within `d0`: the exact negative gradient
/// of `1/2 k_rep (1/d - 1/d0)^2 d_g^n`, which has both a push away from the
/// point and a pull toward the goal from the product rule on `d_g^n`.
pub fn apf_force(obs: &Observation, lidar: &LidarConfig, params: &ApfParams) -> Vec2 {
    let goal = obs.goal;
    let mut force = goal * params.k_att;

    let d_g = goal.norm();
    for point in obs.reflections(lidar) {
        let d = point.norm();
        if d >= params.d0 || d == 0.0 {
            continue;
        }
        let gap = 1.0 / d - 1.0 / params.d0;
        let dg_n = d_g.powi(params.n);
        // Push away from the reflection point.
        force += point * (-params.k_rep * gap / (d * d) * dg_n / d);
        // Product-rule term: pull toward the goal.
        if d_g > 0.0 {
            let dg_nm2 = d_g.powi(params.n - 2);
            force += goal * (0.5 * params.n as f64 * params.k_rep * gap * gap * dg_nm2);
        }
    }
    force
}

/// Map the force to a discrete command: the turn rate whose heading change
/// over `dt` comes closest to the angle between the force and the robot
/// velocity, and the acceleration notch nearest the force projected onto
/// the velocity direction scaled by `1/m`. At rest the heading direction
/// substitutes for the velocity direction.
pub fn apf_action(
    obs: &Observation,
    lidar: &LidarConfig,
    params: &ApfParams,
    dt: f64,
) -> Action {
    let force = apf_force(obs, lidar, params);
    let motion_dir = if obs.velocity.norm() < SPEED_DIRECTION_FLOOR {
        Vec2::new(1.0, 0.0)
    } else {
        obs.velocity.normalized()
    };
    let turn_rate = nearest_turn_rate(force.angle() - motion_dir.angle(), dt);
    let accel = nearest_accel(force.dot(motion_dir) / params.m);
    Action { accel, turn_rate }
}

/// Stateless potential-field planner.
pub struct ApfPlanner {
    pub params: ApfParams,
    pub lidar: LidarConfig,
    pub dt: f64,
}

impl ApfPlanner {
    pub fn new(params: ApfParams, lidar: LidarConfig, dt: f64) -> Self {
        ApfPlanner { params, lidar, dt }
    }
}

impl Planner for ApfPlanner {
    fn begin_episode(&mut self, _seed: u64) {}

    fn act(&mut self, obs: &Observation, _steering_speed: f64) -> Action {
        apf_action(obs, &self.lidar, &self.params, self.dt)
    }
}
