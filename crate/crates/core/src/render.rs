//! Deterministic SVG rendering of an environment and an optional
//! trajectory: current-speed shading (darker is faster), flow arrows on a
//! coarse grid, obstacles, start/goal markers, and the robot path.

use crate::env::Environment;
use crate::eval::StepRecord;
use crate::vec2::Vec2;
use std::fmt::Write;

/// Shading cell size, m.
const CELL: f64 = 1.0;
/// Arrow grid spacing, m.
const ARROW_SPACING: f64 = 5.0;
const ARROW_LEN: f64 = 1.6;

fn shade(speed: f64, max_speed: f64) -> (u8, u8, u8) {
    let t = if max_speed > 0.0 {
        (speed / max_speed).clamp(0.0, 1.0)
    } else {
        0.0
    };
    // Light water blue down to deep navy.
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    (lerp(224.0, 8.0), lerp(240.0, 48.0), lerp(250.0, 112.0))
}

/// Render the environment with a trajectory overlay. `goal_radius` draws
/// the acceptance circle around the goal; `boundary_margin` places the
/// evaluation boundary square outside the map. The output is a pure
/// function of the inputs, byte for byte.
pub fn render_svg(
    env: &Environment,
    trajectory: &[StepRecord],
    goal_radius: f64,
    boundary_margin: f64,
) -> String {
    let size = env.boundary;
    let cells = (size / CELL).ceil() as usize;

    // One pass for the normalization, one for the fills.
    let mut speeds = vec![0.0f64; cells * cells];
    let mut max_speed = 0.0f64;
    for iy in 0..cells {
        for ix in 0..cells {
            let p = Vec2::new((ix as f64 + 0.5) * CELL, (iy as f64 + 0.5) * CELL);
            let s = env.flow_at(p).norm();
            speeds[iy * cells + ix] = s;
            max_speed = max_speed.max(s);
        }
    }

    let pad = boundary_margin + 1.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"720\" \
         viewBox=\"{:.3} {:.3} {:.3} {:.3}\">",
        -pad,
        -pad,
        size + 2.0 * pad,
        size + 2.0 * pad
    );
    // World coordinates with +y up.
    let _ = writeln!(svg, "<g transform=\"translate(0 {size:.3}) scale(1 -1)\">");

    for iy in 0..cells {
        for ix in 0..cells {
            let (r, g, b) = shade(speeds[iy * cells + ix], max_speed);
            let _ = writeln!(
                svg,
                "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{CELL:.3}\" height=\"{CELL:.3}\" \
                 fill=\"rgb({r},{g},{b})\"/>",
                ix as f64 * CELL,
                iy as f64 * CELL,
            );
        }
    }

    // Flow direction arrows.
    let arrows = (size / ARROW_SPACING).floor() as usize;
    for iy in 0..arrows {
        for ix in 0..arrows {
            let p = Vec2::new(
                (ix as f64 + 0.5) * ARROW_SPACING,
                (iy as f64 + 0.5) * ARROW_SPACING,
            );
            let v = env.flow_at(p);
            if v.norm() < 1e-9 {
                continue;
            }
            let dir = v.normalized();
            let tip = p + dir * ARROW_LEN;
            let left = tip - dir.rotated(0.5) * 0.6;
            let right = tip - dir.rotated(-0.5) * 0.6;
            let _ = writeln!(
                svg,
                "<path d=\"M {:.3} {:.3} L {:.3} {:.3} M {:.3} {:.3} L {:.3} {:.3} L {:.3} {:.3}\" \
                 stroke=\"white\" stroke-width=\"0.15\" fill=\"none\" opacity=\"0.8\"/>",
                p.x, p.y, tip.x, tip.y, left.x, left.y, tip.x, tip.y, right.x, right.y
            );
        }
    }

    // Map extent and, outside it, the evaluation boundary.
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{size:.3}\" height=\"{size:.3}\" fill=\"none\" \
         stroke=\"#888\" stroke-width=\"0.1\"/>"
    );
    let _ = writeln!(
        svg,
        "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"none\" \
         stroke=\"#c03333\" stroke-width=\"0.2\" stroke-dasharray=\"1.2 0.8\"/>",
        -boundary_margin,
        -boundary_margin,
        size + 2.0 * boundary_margin,
        size + 2.0 * boundary_margin
    );

    for o in &env.obstacles {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"{:.3}\" fill=\"#3a3a3a\" stroke=\"#111\" \
             stroke-width=\"0.12\"/>",
            o.center.x, o.center.y, o.radius
        );
    }

    // Goal circle and start marker.
    let _ = writeln!(
        svg,
        "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"{goal_radius:.3}\" fill=\"#f3c614\" \
         fill-opacity=\"0.55\" stroke=\"#b08900\" stroke-width=\"0.15\"/>",
        env.goal.x, env.goal.y
    );
    let _ = writeln!(
        svg,
        "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"0.8\" fill=\"#2e9e4f\" stroke=\"#0c5f28\" \
         stroke-width=\"0.15\"/>",
        env.start.x, env.start.y
    );

    if !trajectory.is_empty() {
        let mut path = format!("M {:.3} {:.3}", env.start.x, env.start.y);
        for s in trajectory {
            let _ = write!(path, " L {:.3} {:.3}", s.x, s.y);
        }
        let _ = writeln!(
            svg,
            "<path d=\"{path}\" fill=\"none\" stroke=\"#e03a3a\" stroke-width=\"0.3\" \
             stroke-linejoin=\"round\"/>"
        );
        // Mark the first point that leaves the evaluation boundary.
        let limit_lo = -boundary_margin;
        let limit_hi = size + boundary_margin;
        if let Some(s) = trajectory
            .iter()
            .find(|s| s.x < limit_lo || s.x > limit_hi || s.y < limit_lo || s.y > limit_hi)
        {
            let _ = writeln!(
                svg,
                "<path d=\"M {:.3} {:.3} l 1 1 m 0 -1 l -1 1 m 0.5 -0.5\" stroke=\"#ff0000\" \
                 stroke-width=\"0.35\" fill=\"none\" transform=\"translate(-0.5 -0.5)\"/>",
                s.x, s.y
            );
        }
    }

    svg.push_str("</g>\n</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate, Phase, Placement, SimConfig};

    #[test]
    fn rendering_is_deterministic() {
        let cfg = SimConfig::default();
        let env = generate(Phase::One, 5, &cfg, Placement::Random).unwrap();
        let steps = vec![StepRecord {
            t: 0.5,
            x: 10.0,
            y: 10.0,
            heading: 0.0,
            speed: 1.0,
            accel: 0.0,
            turn_rate: 0.0,
            reward: 0.0,
            phi: 1.0,
        }];
        let a = render_svg(&env, &steps, cfg.goal_radius, cfg.boundary_margin);
        let b = render_svg(&env, &steps, cfg.goal_radius, cfg.boundary_margin);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn empty_trajectory_renders_environment_only() {
        let cfg = SimConfig::default();
        let env = generate(Phase::One, 5, &cfg, Placement::Random).unwrap();
        let svg = render_svg(&env, &[], cfg.goal_radius, cfg.boundary_margin);
        assert!(!svg.contains("stroke=\"#e03a3a\""));
        assert!(svg.contains("circle"));
    }

    #[test]
    fn out_of_bounds_points_get_a_marker() {
        let cfg = SimConfig::default();
        let env = generate(Phase::One, 5, &cfg, Placement::Random).unwrap();
        let inside = StepRecord {
            t: 0.5,
            x: 10.0,
            y: 10.0,
            heading: 0.0,
            speed: 1.0,
            accel: 0.0,
            turn_rate: 0.0,
            reward: 0.0,
            phi: 1.0,
        };
        let outside = StepRecord { x: -8.0, ..inside.clone() };
        let without = render_svg(&env, std::slice::from_ref(&inside), cfg.goal_radius, cfg.boundary_margin);
        assert!(!without.contains("stroke=\"#ff0000\""));
        let with = render_svg(&env, &[inside, outside], cfg.goal_radius, cfg.boundary_margin);
        assert!(with.contains("stroke=\"#ff0000\""));
    }
}
