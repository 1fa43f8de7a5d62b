//! The agent's partial view of the world: DVL velocity and goal offset in
//! the robot frame plus a forward fan of LiDAR ranges.

use crate::env::Environment;
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// LiDAR fan geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    /// Number of beams across the fan.
    pub beams: usize,
    /// Beams span `[-half_span, +half_span]` around the heading, radians.
    pub half_span: f64,
    /// Maximum range d0, m. Misses report exactly this value.
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig {
            beams: 61,
            half_span: 2.0 * PI / 3.0,
            max_range: 10.0,
        }
    }
}

impl LidarConfig {
    /// Robot-frame beam angles, evenly spaced across the fan.
    pub fn angles(&self) -> Vec<f64> {
        if self.beams <= 1 {
            return vec![0.0];
        }
        let step = 2.0 * self.half_span / (self.beams - 1) as f64;
        (0..self.beams).map(|i| -self.half_span + i as f64 * step).collect()
    }

    /// Length of the encoded feature vector (velocity + goal + beams).
    pub fn feature_len(&self) -> usize {
        4 + self.beams
    }
}

/// Partial observation handed to planners.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Total (seafloor-relative) velocity in the robot frame, m/s.
    pub velocity: Vec2,
    /// Goal offset in the robot frame, m.
    pub goal: Vec2,
    /// Beam ranges in fan order, each in (0, d0].
    pub ranges: Vec<f64>,
}

impl Observation {
    /// Flat feature vector: velocity and goal pass through unchanged, beam
    /// ranges are normalized by d0 into [0, 1]. Layout is
    /// `[vx, vy, gx, gy, beam_0 .. beam_n-1]`; the per-source encoders
    /// split it back apart.
    pub fn encode(&self, lidar: &LidarConfig) -> Vec<f32> {
        let mut features = Vec::with_capacity(4 + self.ranges.len());
        features.push(self.velocity.x as f32);
        features.push(self.velocity.y as f32);
        features.push(self.goal.x as f32);
        features.push(self.goal.y as f32);
        features.extend(self.ranges.iter().map(|&r| (r / lidar.max_range) as f32));
        features
    }

    /// Robot-frame reflection points for beams that hit something
    /// (range strictly below d0).
    pub fn reflections(&self, lidar: &LidarConfig) -> Vec<Vec2> {
        self.ranges
            .iter()
            .zip(lidar.angles())
            .filter(|(&r, _)| r < lidar.max_range)
            .map(|(&r, a)| Vec2::from_angle(a) * r)
            .collect()
    }

    /// Shortest beam range; d0 when nothing is detected.
    pub fn min_range(&self) -> f64 {
        self.ranges.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Distance along a ray from `origin` in unit direction `dir` to the first
/// intersection with any obstacle circle, clamped to `max_range`. Rays are
/// half-lines; circles behind the origin are ignored.
pub fn raycast(env: &Environment, origin: Vec2, dir: Vec2, max_range: f64) -> f64 {
    let mut best = max_range;
    for o in &env.obstacles {
        let to_center = o.center - origin;
        let along = dir.dot(to_center);
        let disc = along * along - to_center.norm_sq() + o.radius * o.radius;
        if disc < 0.0 {
            continue;
        }
        let sqrt_disc = disc.sqrt();
        let near = along - sqrt_disc;
        let far = along + sqrt_disc;
        let t = if near >= 0.0 {
            near
        } else if far >= 0.0 {
            far
        } else {
            continue;
        };
        if t < best {
            best = t;
        }
    }
    best
}

/// Build the observation for the current environment state.
///
/// Velocity is the total of current flow and steering velocity rotated into
/// the robot frame; the goal offset is likewise expressed in the robot
/// frame; beams are cast from the robot position at the configured fan
/// angles relative to the heading.
pub fn observe(env: &Environment, lidar: &LidarConfig) -> Observation {
    let robot = &env.robot;
    let total_velocity = env.flow_at(robot.position) + robot.steering_velocity();
    let velocity = total_velocity.rotated(-robot.heading);
    let goal = (env.goal - robot.position).rotated(-robot.heading);
    let ranges = lidar
        .angles()
        .into_iter()
        .map(|a| {
            let dir = Vec2::from_angle(robot.heading + a);
            raycast(env, robot.position, dir, lidar.max_range)
        })
        .collect();
    Observation { velocity, goal, ranges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Obstacle, RobotState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn env_with(obstacles: Vec<Obstacle>, robot: RobotState) -> Environment {
        Environment {
            seed: 0,
            phase: 1,
            boundary: 50.0,
            start: Vec2::new(5.0, 5.0),
            goal: Vec2::new(45.0, 45.0),
            vortices: vec![],
            obstacles,
            robot,
            step_count: 0,
        }
    }

    #[test]
    fn goal_offset_zero_at_goal() {
        let mut env = env_with(vec![], RobotState {
            position: Vec2::new(45.0, 45.0),
            heading: 0.0,
            speed: 0.0,
        });
        env.goal = env.robot.position;
        let obs = observe(&env, &LidarConfig::default());
        assert!(obs.goal.norm() < 1e-12);
    }

    #[test]
    fn own_speed_lies_along_heading_axis() {
        for heading in [0.0, 0.7, -2.0] {
            let env = env_with(vec![], RobotState {
                position: Vec2::new(20.0, 20.0),
                heading,
                speed: 1.3,
            });
            let obs = observe(&env, &LidarConfig::default());
            assert!((obs.velocity.x - 1.3).abs() < 1e-12);
            assert!(obs.velocity.y.abs() < 1e-12);
        }
    }

    #[test]
    fn current_rotates_into_robot_frame() {
        // A vortex directly above the robot with the core edge exactly at
        // the robot produces a (1, 0) current there; with heading pi/2 and
        // zero steering speed the DVL reads (0, -1) in the robot frame.
        let mut env = env_with(vec![], RobotState {
            position: Vec2::new(20.0, 20.0),
            heading: std::f64::consts::FRAC_PI_2,
            speed: 0.0,
        });
        env.vortices.push(crate::env::Vortex::from_edge_speed(
            Vec2::new(20.0, 22.0),
            2.0,
            1.0,
            true,
        ));
        let current = env.flow_at(env.robot.position);
        assert!((current - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        let obs = observe(&env, &LidarConfig::default());
        assert!((obs.velocity - Vec2::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn raycast_hits_circle_dead_ahead() {
        let env = env_with(
            vec![Obstacle { center: Vec2::new(25.0, 20.0), radius: 1.0 }],
            RobotState { position: Vec2::new(20.0, 20.0), heading: 0.0, speed: 0.0 },
        );
        let lidar = LidarConfig::default();
        let obs = observe(&env, &lidar);
        let forward = lidar.beams / 2;
        assert!((obs.ranges[forward] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn raycast_misses_report_max_range() {
        let lidar = LidarConfig::default();
        let empty = env_with(vec![], RobotState {
            position: Vec2::new(20.0, 20.0),
            heading: 0.0,
            speed: 0.0,
        });
        let obs = observe(&empty, &lidar);
        assert!(obs.ranges.iter().all(|&r| r == lidar.max_range));

        // Obstacle entirely behind the sensor: rays are half-lines.
        let behind = env_with(
            vec![Obstacle { center: Vec2::new(10.0, 20.0), radius: 1.0 }],
            RobotState { position: Vec2::new(20.0, 20.0), heading: 0.0, speed: 0.0 },
        );
        let obs = observe(&behind, &lidar);
        assert!(obs.ranges.iter().all(|&r| r == lidar.max_range));
    }

    #[test]
    fn encode_normalizes_ranges_only() {
        let lidar = LidarConfig { beams: 3, ..LidarConfig::default() };
        let obs = Observation {
            velocity: Vec2::new(0.5, -0.25),
            goal: Vec2::new(3.0, 4.0),
            ranges: vec![10.0, 5.0, 2.5],
        };
        let f = obs.encode(&lidar);
        assert_eq!(f, vec![0.5, -0.25, 3.0, 4.0, 1.0, 0.5, 0.25]);
    }

    #[test]
    fn reflections_skip_misses() {
        let lidar = LidarConfig { beams: 3, ..LidarConfig::default() };
        let obs = Observation {
            velocity: Vec2::ZERO,
            goal: Vec2::ZERO,
            ranges: vec![10.0, 5.0, 10.0],
        };
        let pts = obs.reflections(&lidar);
        assert_eq!(pts.len(), 1);
        assert!((pts[0].norm() - 5.0).abs() < 1e-12);
    }

    // Walks the ray at 1 cm resolution and reports the first sample inside
    // any obstacle. Independent of the analytic intersection.
    fn raycast_walk_oracle(env: &Environment, origin: Vec2, dir: Vec2, max_range: f64) -> f64 {
        let step = 0.01;
        let mut t = 0.0;
        while t <= max_range {
            let p = origin + dir * t;
            if env.obstacles.iter().any(|o| p.distance(o.center) <= o.radius) {
                return t;
            }
            t += step;
        }
        max_range
    }

    #[test]
    fn raycast_matches_dense_walk_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(12345);
        let lidar = LidarConfig::default();
        for _ in 0..20 {
            let obstacles: Vec<Obstacle> = (0..6)
                .map(|_| Obstacle {
                    center: Vec2::new(rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)),
                    radius: rng.gen_range(1.0..3.0),
                })
                .collect();
            let mut robot = RobotState {
                position: Vec2::new(rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)),
                heading: rng.gen_range(-3.0..3.0),
                speed: 0.0,
            };
            // Keep the sensor itself out of obstacle interiors.
            if obstacles.iter().any(|o| robot.position.distance(o.center) <= o.radius + 0.1) {
                robot.position = Vec2::new(0.0, 0.0);
            }
            let env = env_with(obstacles, robot);
            let obs = observe(&env, &lidar);
            for (a, &range) in lidar.angles().iter().zip(&obs.ranges) {
                let dir = Vec2::from_angle(env.robot.heading + a);
                let oracle = raycast_walk_oracle(&env, env.robot.position, dir, lidar.max_range);
                assert!(
                    (range - oracle).abs() <= 0.02,
                    "beam at {a}: analytic {range} vs oracle {oracle}"
                );
            }
        }
    }

    #[test]
    fn shrinking_obstacles_never_shortens_ranges() {
        let mut rng = ChaCha20Rng::seed_from_u64(777);
        let lidar = LidarConfig::default();
        for _ in 0..20 {
            let obstacles: Vec<Obstacle> = (0..5)
                .map(|_| Obstacle {
                    center: Vec2::new(rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)),
                    radius: rng.gen_range(1.5..3.0),
                })
                .collect();
            let robot = RobotState {
                position: Vec2::new(25.0, 25.0),
                heading: rng.gen_range(-3.0..3.0),
                speed: 0.0,
            };
            if obstacles.iter().any(|o| robot.position.distance(o.center) <= o.radius) {
                continue;
            }
            let env = env_with(obstacles.clone(), robot);
            let before = observe(&env, &lidar);
            let shrunk = obstacles
                .iter()
                .map(|o| Obstacle { center: o.center, radius: o.radius * 0.5 })
                .collect();
            let env2 = env_with(shrunk, robot);
            let after = observe(&env2, &lidar);
            for (b, a) in before.ranges.iter().zip(&after.ranges) {
                assert!(a >= b, "range shrank from {b} to {a}");
            }
        }
    }
}
