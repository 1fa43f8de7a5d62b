//! Marine world simulation: vortex currents, circular obstacles, point-robot
//! kinematics under flow disturbance, reward, and episode lifecycle.

use crate::seed::{derive_rng, Stream};
use crate::vec2::{wrap_angle, Vec2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Linear acceleration notches, m/s^2.
pub const ACCELS: [f64; 3] = [-0.4, 0.0, 0.4];
/// Angular velocity notches, rad/s.
pub const TURN_RATES: [f64; 3] = [-0.52, 0.0, 0.52];
/// Size of the discrete action set.
pub const ACTION_COUNT: usize = 9;

/// One control command: rate of change of steering-speed magnitude and of
/// heading, both held constant over a control step.
///
/// The discrete set is the 3x3 grid of `ACCELS` x `TURN_RATES`; index
/// `i = 3 * accel_index + turn_index`, so index 0 is (-0.4, -0.52), index 4
/// is (0.0, 0.0) and index 8 is (0.4, 0.52).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub accel: f64,
    pub turn_rate: f64,
}

impl Action {
    pub fn from_index(index: usize) -> Action {
        assert!(index < ACTION_COUNT, "action index out of range: {index}");
        Action {
            accel: ACCELS[index / 3],
            turn_rate: TURN_RATES[index % 3],
        }
    }

    /// Index in the discrete grid; the action must have been built from it.
    pub fn index(&self) -> usize {
        let ai = ACCELS
            .iter()
            .position(|&a| a == self.accel)
            .expect("acceleration not on the discrete grid");
        let wi = TURN_RATES
            .iter()
            .position(|&w| w == self.turn_rate)
            .expect("turn rate not on the discrete grid");
        ai * 3 + wi
    }

    pub fn all() -> [Action; ACTION_COUNT] {
        std::array::from_fn(Action::from_index)
    }
}

/// Rankine vortex: rigid-body rotation inside the core, 1/r decay outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vortex {
    pub center: Vec2,
    /// Core radius r0, m. Must be positive.
    pub core_radius: f64,
    /// Circulation, m^2/s; the sign sets the spin direction
    /// (positive = counterclockwise).
    pub circulation: f64,
}

impl Vortex {
    /// Vortex with edge speed `v_edge` at the core boundary and the given
    /// spin direction.
    pub fn from_edge_speed(center: Vec2, core_radius: f64, v_edge: f64, ccw: bool) -> Vortex {
        let magnitude = 2.0 * PI * core_radius * v_edge;
        Vortex {
            center,
            core_radius,
            circulation: if ccw { magnitude } else { -magnitude },
        }
    }

    /// Tangential speed at the core edge.
    pub fn edge_speed(&self) -> f64 {
        self.circulation.abs() / (2.0 * PI * self.core_radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
}

/// Robot pose and commanded speed. The steering velocity V_S points along
/// `heading` with magnitude `speed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    /// Heading, radians in (-pi, pi].
    pub heading: f64,
    /// |V_S|, m/s, in [0, v_max].
    pub speed: f64,
}

impl RobotState {
    pub fn steering_velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }
}

/// Episode status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Running,
    Goal,
    Collision,
    OutOfBounds,
    Timeout,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Running
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Goal => "goal",
            Outcome::Collision => "collision",
            Outcome::OutOfBounds => "out_of_bounds",
            Outcome::Timeout => "timeout",
        }
    }
}

/// Reward shaping constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub r_step: f64,
    pub r_collision: f64,
    pub r_goal: f64,
    /// Gain on per-step goal-distance progress.
    pub alpha: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            r_step: -1.0,
            r_collision: -50.0,
            r_goal: 100.0,
            alpha: 1.0,
        }
    }
}

/// Simulation constants shared by every episode of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Side length of the square map, m.
    pub map_size: f64,
    /// Forward speed cap, m/s.
    pub v_max: f64,
    /// Robot clearance radius used for collision tests, m.
    pub clearance_radius: f64,
    /// Goal-reached radius, m.
    pub goal_radius: f64,
    /// Episode step budget.
    pub max_steps: u32,
    /// Integration substeps per control step.
    pub substeps: u32,
    /// Terminate episodes that leave the evaluation boundary. Off during
    /// training, on in evaluation experiments.
    pub enforce_boundary: bool,
    /// The evaluation boundary square extends this far beyond the map on
    /// every side, m.
    pub boundary_margin: f64,
    pub reward: RewardParams,
    /// Vortex edge-speed sampling range, m/s.
    pub v_edge_range: (f64, f64),
    /// Vortex core-radius sampling range, m.
    pub core_radius_range: (f64, f64),
    /// Obstacle radius sampling range, m.
    pub obstacle_radius_range: (f64, f64),
    /// Minimum obstacle-center distance from start and goal, m.
    pub obstacle_keepout: f64,
    /// Minimum vortex-center distance from start and goal, m.
    pub vortex_keepout: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            map_size: 50.0,
            v_max: 2.0,
            clearance_radius: 0.5,
            goal_radius: 2.0,
            max_steps: 1000,
            substeps: 10,
            enforce_boundary: false,
            boundary_margin: 5.0,
            reward: RewardParams::default(),
            v_edge_range: (5.0, 10.0),
            core_radius_range: (0.2, 0.6),
            obstacle_radius_range: (1.0, 3.0),
            obstacle_keepout: 5.0,
            vortex_keepout: 5.0,
        }
    }
}

/// Curriculum difficulty phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    One,
    Two,
    Three,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::One, Phase::Two, Phase::Three];

    pub fn vortex_count(self) -> usize {
        match self {
            Phase::One => 4,
            Phase::Two => 6,
            Phase::Three => 8,
        }
    }

    pub fn obstacle_count(self) -> usize {
        match self {
            Phase::One => 6,
            Phase::Two => 8,
            Phase::Three => 10,
        }
    }

    pub fn min_start_goal_distance(self) -> f64 {
        match self {
            Phase::One => 30.0,
            Phase::Two => 35.0,
            Phase::Three => 40.0,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
            Phase::Three => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Phase> {
        match n {
            1 => Some(Phase::One),
            2 => Some(Phase::Two),
            3 => Some(Phase::Three),
            _ => None,
        }
    }
}

/// Start/goal placement rule for environment generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Random start and goal at least the phase's minimum distance apart.
    Random,
    /// Fixed positions, e.g. lower-left start and top-right goal for
    /// evaluation suites.
    Fixed { start: Vec2, goal: Vec2 },
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("could not place start/goal at distance >= {min_distance} after {tries} tries")]
    StartGoalPlacement { min_distance: f64, tries: usize },
    #[error("could not place obstacle {index} outside keepout zones after {tries} tries")]
    ObstaclePlacement { index: usize, tries: usize },
    #[error("placement outside the map boundary")]
    OutsideBoundary,
}

const PLACEMENT_TRIES: usize = 10_000;

/// Full simulation state for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    pub phase: u8,
    /// Side length of the map square; coordinates live in `[0, boundary]^2`.
    pub boundary: f64,
    pub start: Vec2,
    pub goal: Vec2,
    pub vortices: Vec<Vortex>,
    pub obstacles: Vec<Obstacle>,
    pub robot: RobotState,
    pub step_count: u32,
}

/// Flow velocity of a single Rankine vortex at `point`.
///
/// Purely tangential: rigid-body rotation `(|C|/2pi) * r / r0^2` inside the
/// core and `(|C|/2pi) / r` outside, counterclockwise for positive
/// circulation. The vortex center maps to a zero vector.
pub fn rankine_velocity(vortex: &Vortex, point: Vec2) -> Vec2 {
    let offset = point - vortex.center;
    let r = offset.norm();
    if r == 0.0 {
        return Vec2::ZERO;
    }
    let profile = if r <= vortex.core_radius {
        r / (vortex.core_radius * vortex.core_radius)
    } else {
        1.0 / r
    };
    // perp of the radial unit vector gives the CCW tangent.
    offset.perp() * (vortex.circulation / (2.0 * PI) * profile / r)
}

impl Environment {
    /// Current velocity at `point`: superposition of all vortices.
    pub fn flow_at(&self, point: Vec2) -> Vec2 {
        self.vortices
            .iter()
            .fold(Vec2::ZERO, |acc, v| acc + rankine_velocity(v, point))
    }

    pub fn goal_distance(&self) -> f64 {
        self.robot.position.distance(self.goal)
    }

    fn inside_boundary(&self, p: Vec2, margin: f64) -> bool {
        p.x >= -margin
            && p.x <= self.boundary + margin
            && p.y >= -margin
            && p.y <= self.boundary + margin
    }

    /// Classify the current state. Collision takes precedence over goal,
    /// then out-of-bounds (when enforced), then the step budget
    /// (`step_count` strictly beyond `max_steps`).
    pub fn status(&self, cfg: &SimConfig) -> Outcome {
        let p = self.robot.position;
        for o in &self.obstacles {
            if p.distance(o.center) <= o.radius + cfg.clearance_radius {
                return Outcome::Collision;
            }
        }
        if p.distance(self.goal) <= cfg.goal_radius {
            return Outcome::Goal;
        }
        if cfg.enforce_boundary && !self.inside_boundary(p, cfg.boundary_margin) {
            return Outcome::OutOfBounds;
        }
        if self.step_count > cfg.max_steps {
            return Outcome::Timeout;
        }
        Outcome::Running
    }

    /// Advance one control step of length `dt` under `action`.
    ///
    /// Heading and speed follow their closed forms
    /// `theta(t) = theta0 + w t` and `|V_S|(t) = clip(|V_S|0 + a t, 0, v_max)`;
    /// the position ODE `dX/dt = V_C(X) + V_S(t)` is integrated with a
    /// fixed-substep explicit Runge-Kutta scheme, sampling the flow at the
    /// substep positions. Collision, goal, and boundary are checked at every
    /// substep; the step budget is checked once the full step completes.
    pub fn step(&mut self, action: Action, dt: f64, cfg: &SimConfig) -> Outcome {
        assert!(dt > 0.0, "control step must be positive");
        let substeps = cfg.substeps.max(1);
        let h = dt / substeps as f64;
        let theta0 = self.robot.heading;
        let speed0 = self.robot.speed;

        let speed_at = |t: f64| (speed0 + action.accel * t).clamp(0.0, cfg.v_max);
        let steering_at = |t: f64| Vec2::from_angle(theta0 + action.turn_rate * t) * speed_at(t);

        for k in 0..substeps {
            let t0 = k as f64 * h;
            let x = self.robot.position;
            let k1 = self.flow_at(x) + steering_at(t0);
            let k2 = self.flow_at(x + k1 * (h / 2.0)) + steering_at(t0 + h / 2.0);
            let k3 = self.flow_at(x + k2 * (h / 2.0)) + steering_at(t0 + h / 2.0);
            let k4 = self.flow_at(x + k3 * h) + steering_at(t0 + h);
            let t1 = t0 + h;
            self.robot.position = x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            self.robot.heading = wrap_angle(theta0 + action.turn_rate * t1);
            self.robot.speed = speed_at(t1);

            let outcome = self.status_ignoring_budget(cfg);
            if outcome.is_terminal() {
                return outcome;
            }
        }

        self.step_count += 1;
        if self.step_count >= cfg.max_steps {
            Outcome::Timeout
        } else {
            Outcome::Running
        }
    }

    fn status_ignoring_budget(&self, cfg: &SimConfig) -> Outcome {
        let p = self.robot.position;
        for o in &self.obstacles {
            if p.distance(o.center) <= o.radius + cfg.clearance_radius {
                return Outcome::Collision;
            }
        }
        if p.distance(self.goal) <= cfg.goal_radius {
            return Outcome::Goal;
        }
        if cfg.enforce_boundary && !self.inside_boundary(p, cfg.boundary_margin) {
            return Outcome::OutOfBounds;
        }
        Outcome::Running
    }

    /// Serialize to the snapshot document (pretty JSON).
    pub fn to_snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn from_snapshot(text: &str) -> Result<Environment, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Per-step reward: a base of `r_step + alpha * (d_prev - d_next)` on goal
/// progress, plus the collision or goal bonus when the step ends the episode
/// that way.
pub fn reward(
    prev: &RobotState,
    next: &RobotState,
    goal: Vec2,
    outcome: Outcome,
    params: &RewardParams,
) -> f64 {
    let d_prev = prev.position.distance(goal);
    let d_next = next.position.distance(goal);
    let base = params.r_step + params.alpha * (d_prev - d_next);
    match outcome {
        Outcome::Collision => base + params.r_collision,
        Outcome::Goal => base + params.r_goal,
        _ => base,
    }
}

/// Generate a random episode environment for `phase`, deterministically in
/// `seed`. Obstacle and vortex parameters are sampled from the ranges in
/// `cfg`; obstacle centers keep `obstacle_keepout` meters away from both
/// start and goal (obstacles may overlap each other). The robot starts at
/// the start position with random heading and a random speed in
/// `[0, v_max]`.
pub fn generate(
    phase: Phase,
    seed: u64,
    cfg: &SimConfig,
    placement: Placement,
) -> Result<Environment, GenerateError> {
    let mut rng = derive_rng(seed, Stream::EnvGen, 0);
    let size = cfg.map_size;

    let (start, goal) = match placement {
        Placement::Fixed { start, goal } => {
            let inside = |p: Vec2| p.x >= 0.0 && p.x <= size && p.y >= 0.0 && p.y <= size;
            if !inside(start) || !inside(goal) {
                return Err(GenerateError::OutsideBoundary);
            }
            (start, goal)
        }
        Placement::Random => {
            let min_dist = phase.min_start_goal_distance();
            let mut placed = None;
            for _ in 0..PLACEMENT_TRIES {
                let s = Vec2::new(rng.gen_range(0.0..size), rng.gen_range(0.0..size));
                let g = Vec2::new(rng.gen_range(0.0..size), rng.gen_range(0.0..size));
                if s.distance(g) >= min_dist {
                    placed = Some((s, g));
                    break;
                }
            }
            placed.ok_or(GenerateError::StartGoalPlacement {
                min_distance: min_dist,
                tries: PLACEMENT_TRIES,
            })?
        }
    };

    let mut vortices = Vec::with_capacity(phase.vortex_count());
    for index in 0..phase.vortex_count() {
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let center = Vec2::new(rng.gen_range(0.0..size), rng.gen_range(0.0..size));
            if center.distance(start) >= cfg.vortex_keepout
                && center.distance(goal) >= cfg.vortex_keepout
            {
                placed = Some(center);
                break;
            }
        }
        let center = placed.ok_or(GenerateError::ObstaclePlacement {
            index,
            tries: PLACEMENT_TRIES,
        })?;
        let core_radius = rng.gen_range(cfg.core_radius_range.0..=cfg.core_radius_range.1);
        let v_edge = rng.gen_range(cfg.v_edge_range.0..=cfg.v_edge_range.1);
        let ccw = rng.gen::<bool>();
        vortices.push(Vortex::from_edge_speed(center, core_radius, v_edge, ccw));
    }

    let mut obstacles = Vec::with_capacity(phase.obstacle_count());
    for index in 0..phase.obstacle_count() {
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let center = Vec2::new(rng.gen_range(0.0..size), rng.gen_range(0.0..size));
            if center.distance(start) >= cfg.obstacle_keepout
                && center.distance(goal) >= cfg.obstacle_keepout
            {
                placed = Some(center);
                break;
            }
        }
        let center = placed.ok_or(GenerateError::ObstaclePlacement {
            index,
            tries: PLACEMENT_TRIES,
        })?;
        let radius = rng.gen_range(cfg.obstacle_radius_range.0..=cfg.obstacle_radius_range.1);
        obstacles.push(Obstacle { center, radius });
    }

    // Training episodes start with a fully random pose. Fixed-placement
    // evaluation environments start roughly facing the goal so the first
    // seconds measure planning, not an unwinnable sprint toward the nearby
    // map edge.
    let heading = match placement {
        Placement::Random => PI - rng.gen::<f64>() * 2.0 * PI,
        Placement::Fixed { .. } => {
            wrap_angle((goal - start).angle() + rng.gen_range(-PI / 4.0..PI / 4.0))
        }
    };
    let speed = rng.gen_range(0.0..=cfg.v_max);

    Ok(Environment {
        seed,
        phase: phase.number(),
        boundary: size,
        start,
        goal,
        vortices,
        obstacles,
        robot: RobotState {
            position: start,
            heading,
            speed,
        },
        step_count: 0,
    })
}
