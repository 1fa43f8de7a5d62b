//! Randomized invariants of the simulator and sensing stack.

use marinenav::agent::quantile_huber;
use marinenav::env::{
    generate, rankine_velocity, Action, Environment, Phase, Placement, RobotState, SimConfig,
    Vortex, ACTION_COUNT,
};
use marinenav::sensing::{observe, LidarConfig};
use marinenav::vec2::Vec2;
use proptest::prelude::*;

fn arb_vortex() -> impl Strategy<Value = Vortex> {
    (
        0.0..50.0f64,
        0.0..50.0f64,
        3.0..8.0f64,
        5.0..10.0f64,
        any::<bool>(),
    )
        .prop_map(|(x, y, r0, v_edge, ccw)| {
            Vortex::from_edge_speed(Vec2::new(x, y), r0, v_edge, ccw)
        })
}

fn env_with_vortices(vortices: Vec<Vortex>) -> Environment {
    Environment {
        seed: 0,
        phase: 1,
        boundary: 50.0,
        start: Vec2::new(5.0, 5.0),
        goal: Vec2::new(45.0, 45.0),
        vortices,
        obstacles: vec![],
        robot: RobotState {
            position: Vec2::new(5.0, 5.0),
            heading: 0.0,
            speed: 0.0,
        },
        step_count: 0,
    }
}

proptest! {
    /// Superposition: the combined field of A followed by B equals the sum
    /// of the separate fields up to accumulation rounding.
    #[test]
    fn flow_superposition_is_linear(
        a in prop::collection::vec(arb_vortex(), 1..5),
        b in prop::collection::vec(arb_vortex(), 1..5),
        px in 0.0..50.0f64,
        py in 0.0..50.0f64,
    ) {
        let p = Vec2::new(px, py);
        let mut both = a.clone();
        both.extend(b.iter().copied());
        let combined = env_with_vortices(both).flow_at(p);
        let separate = env_with_vortices(a).flow_at(p) + env_with_vortices(b).flow_at(p);
        prop_assert!((combined - separate).norm() < 1e-9);
    }

    /// The tangential speed profile peaks exactly at the core edge.
    #[test]
    fn rankine_speed_peaks_at_the_core_radius(
        r0 in 1.0..10.0f64,
        v_edge in 5.0..10.0f64,
        ccw in any::<bool>(),
    ) {
        let v = Vortex::from_edge_speed(Vec2::ZERO, r0, v_edge, ccw);
        let at = |r: f64| rankine_velocity(&v, Vec2::new(r, 0.0)).norm();
        let peak = at(r0);
        prop_assert!((peak - v_edge).abs() < 1e-9);
        for r in [0.1 * r0, 0.5 * r0, 0.9 * r0, 1.1 * r0, 2.0 * r0, 10.0 * r0] {
            prop_assert!(at(r) <= peak + 1e-12);
        }
    }

    /// Observation quantities rotate back to world frame exactly.
    #[test]
    fn observation_frame_round_trips(
        vortices in prop::collection::vec(arb_vortex(), 0..4),
        x in 1.0..49.0f64,
        y in 1.0..49.0f64,
        heading in -3.1..3.1f64,
        speed in 0.0..2.0f64,
    ) {
        let mut env = env_with_vortices(vortices);
        env.robot = RobotState { position: Vec2::new(x, y), heading, speed };
        let obs = observe(&env, &LidarConfig::default());
        let world_velocity = obs.velocity.rotated(heading);
        let expected = env.flow_at(env.robot.position) + env.robot.steering_velocity();
        prop_assert!((world_velocity - expected).norm() < 1e-9);
        let world_goal = obs.goal.rotated(heading) + env.robot.position;
        prop_assert!((world_goal - env.goal).norm() < 1e-9);
    }

    /// Beam ranges always land in (0, d0] when the sensor is outside every
    /// obstacle.
    #[test]
    fn raycast_ranges_are_bounded(seed in 0u64..500) {
        let cfg = SimConfig::default();
        let env = generate(Phase::Two, seed, &cfg, Placement::Random).unwrap();
        let lidar = LidarConfig::default();
        let obs = observe(&env, &lidar);
        for &r in &obs.ranges {
            prop_assert!(r > 0.0 && r <= lidar.max_range);
        }
    }

    /// Speed stays inside [0, v_max] under any action sequence.
    #[test]
    fn speed_never_leaves_its_bounds(
        seed in 0u64..200,
        actions in prop::collection::vec(0usize..ACTION_COUNT, 1..40),
    ) {
        let cfg = SimConfig::default();
        let mut env = generate(Phase::One, seed, &cfg, Placement::Random).unwrap();
        for idx in actions {
            env.step(Action::from_index(idx), 0.7, &cfg);
            prop_assert!(env.robot.speed >= 0.0 && env.robot.speed <= cfg.v_max);
        }
    }

    /// The progress shaping telescopes: summed over an episode prefix it
    /// equals alpha * (d_0 - d_T).
    #[test]
    fn reward_shaping_telescopes(
        seed in 0u64..100,
        actions in prop::collection::vec(0usize..ACTION_COUNT, 1..30),
    ) {
        let cfg = SimConfig::default();
        let mut env = generate(Phase::One, seed, &cfg, Placement::Random).unwrap();
        let d0 = env.goal_distance();
        let mut shaped = 0.0;
        for idx in actions {
            let before = env.goal_distance();
            let outcome = env.step(Action::from_index(idx), 0.5, &cfg);
            shaped += cfg.reward.alpha * (before - env.goal_distance());
            if outcome.is_terminal() {
                break;
            }
        }
        let telescoped = cfg.reward.alpha * (d0 - env.goal_distance());
        prop_assert!((shaped - telescoped).abs() < 1e-9);
    }

    /// Quantile regression asymmetry: overestimation penalties grow with
    /// tau, underestimation penalties shrink, and the loss is non-negative.
    #[test]
    fn quantile_huber_orientation(
        u in -5.0..5.0f64,
        tau_low in 0.05..0.45f64,
        tau_high in 0.55..0.95f64,
    ) {
        prop_assert!(quantile_huber(u, tau_low, 1.0) >= 0.0);
        let low = quantile_huber(u, tau_low, 1.0);
        let high = quantile_huber(u, tau_high, 1.0);
        if u > 0.0 {
            prop_assert!(high > low);
        } else if u < 0.0 {
            prop_assert!(high < low);
        }
    }

    /// Identical seeds give bit-identical rollouts under a fixed policy.
    #[test]
    fn episodes_are_deterministic(seed in 0u64..50) {
        let cfg = SimConfig::default();
        let run = || {
            let mut env = generate(Phase::Two, seed, &cfg, Placement::Random).unwrap();
            let mut trace = Vec::new();
            for i in 0..40 {
                let outcome = env.step(Action::from_index(i % ACTION_COUNT), 0.5, &cfg);
                trace.push((env.robot.position.x.to_bits(), env.robot.position.y.to_bits()));
                if outcome.is_terminal() {
                    break;
                }
            }
            trace
        };
        prop_assert_eq!(run(), run());
    }
}
