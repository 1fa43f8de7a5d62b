//! Batch evaluation: run planners over seeded environment suites and reduce
//! the outcomes to the experiment metrics (success rate, out-of-bounds rate,
//! time and energy over successful episodes, per-action runtime).

use crate::agent::corner_placement;
use crate::env::{generate, reward, Environment, Outcome, Phase, SimConfig, ACCELS, TURN_RATES};
use crate::planner::Planner;
use crate::seed::{derive_seed, Stream};
use crate::sensing::{observe, LidarConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

/// One executed control step: the post-step state plus the command that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Time at the end of the step, seconds.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
    pub turn_rate: f64,
    pub reward: f64,
    /// CVaR threshold behind the decision (1.0 for risk-neutral planners).
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    pub dt: f64,
    /// Wall-clock per planner call, milliseconds. Non-deterministic; kept
    /// out of the CSV exports.
    pub plan_times_ms: Vec<f64>,
}

impl EpisodeRecord {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Episode duration: steps times the control period, exactly.
    pub fn time(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }

    pub fn cumulative_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Energy: the summed magnitude of all action commands, each component
/// normalized by its maximum so acceleration and turn contribute equally.
pub fn energy(record: &EpisodeRecord) -> f64 {
    let a_max = ACCELS[2];
    let w_max = TURN_RATES[2];
    record
        .steps
        .iter()
        .map(|s| s.accel.abs() / a_max + s.turn_rate.abs() / w_max)
        .sum()
}

/// Drive one episode: observe, plan (timed), step, until termination.
pub fn run_episode(
    planner: &mut dyn Planner,
    env: &mut Environment,
    sim: &SimConfig,
    lidar: &LidarConfig,
    dt: f64,
) -> EpisodeRecord {
    let mut record = EpisodeRecord {
        steps: Vec::new(),
        outcome: env.status(sim),
        dt,
        plan_times_ms: Vec::new(),
    };
    while !record.outcome.is_terminal() {
        let obs = observe(env, lidar);
        let started = Instant::now();
        let action = planner.act(&obs, env.robot.speed);
        record
            .plan_times_ms
            .push(started.elapsed().as_secs_f64() * 1e3);
        let prev = env.robot;
        record.outcome = env.step(action, dt, sim);
        let r = reward(&prev, &env.robot, env.goal, record.outcome, &sim.reward);
        record.steps.push(StepRecord {
            t: record.steps.len() as f64 * dt + dt,
            x: env.robot.position.x,
            y: env.robot.position.y,
            heading: env.robot.heading,
            speed: env.robot.speed,
            accel: action.accel,
            turn_rate: action.turn_rate,
            reward: r,
            phi: planner.last_phi(),
        });
    }
    record
}

/// Evaluation difficulty, mirroring the lowest and highest curriculum
/// phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestCase {
    /// 4 vortices, 6 obstacles.
    One,
    /// 8 vortices, 10 obstacles.
    Two,
}

impl TestCase {
    pub fn phase(self) -> Phase {
        match self {
            TestCase::One => Phase::One,
            TestCase::Two => Phase::Three,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            TestCase::One => 1,
            TestCase::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<TestCase> {
        match n {
            1 => Some(TestCase::One),
            2 => Some(TestCase::Two),
            _ => None,
        }
    }
}

/// Deterministic per-episode results.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub env_seed: u64,
    pub outcome: Outcome,
    pub steps: usize,
    pub time: f64,
    pub energy: f64,
    pub cumulative_reward: f64,
    pub mean_plan_ms: f64,
    pub max_plan_ms: f64,
}

/// Suite-level metrics. Time and energy average over successful episodes
/// only and are absent when nothing succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteMetrics {
    pub episodes: usize,
    pub success_rate: f64,
    pub out_of_bounds_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub avg_time: Option<f64>,
    pub avg_energy: Option<f64>,
    pub mean_plan_ms: f64,
    pub max_plan_ms: f64,
}

/// Reduce per-episode summaries to suite metrics.
pub fn aggregate(summaries: &[EpisodeSummary]) -> SuiteMetrics {
    let n = summaries.len();
    let count = |o: Outcome| summaries.iter().filter(|s| s.outcome == o).count();
    let successes: Vec<&EpisodeSummary> = summaries
        .iter()
        .filter(|s| s.outcome == Outcome::Goal)
        .collect();
    let avg_over_successes = |f: fn(&EpisodeSummary) -> f64| {
        if successes.is_empty() {
            None
        } else {
            Some(successes.iter().map(|s| f(s)).sum::<f64>() / successes.len() as f64)
        }
    };
    let plan_calls: usize = summaries.iter().map(|s| s.steps).sum();
    let mean_plan_ms = if plan_calls == 0 {
        0.0
    } else {
        summaries
            .iter()
            .map(|s| s.mean_plan_ms * s.steps as f64)
            .sum::<f64>()
            / plan_calls as f64
    };
    SuiteMetrics {
        episodes: n,
        success_rate: successes.len() as f64 / n.max(1) as f64,
        out_of_bounds_rate: count(Outcome::OutOfBounds) as f64 / n.max(1) as f64,
        collision_rate: count(Outcome::Collision) as f64 / n.max(1) as f64,
        timeout_rate: count(Outcome::Timeout) as f64 / n.max(1) as f64,
        avg_time: avg_over_successes(|s| s.time),
        avg_energy: avg_over_successes(|s| s.energy),
        mean_plan_ms,
        max_plan_ms: summaries
            .iter()
            .map(|s| s.max_plan_ms)
            .fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub metrics: SuiteMetrics,
    pub summaries: Vec<EpisodeSummary>,
    /// Initial environment and full step record for the first
    /// `keep_trajectories` episodes.
    pub trajectories: Vec<(usize, Environment, EpisodeRecord)>,
}

/// Run `episodes` seeded environments of the given test case through a
/// planner. Environments use the fixed lower-left start / top-right goal
/// and enforce the map boundary. Episodes run in parallel; all seeds derive
/// from `master_seed` and the aggregation is order-independent, so results
/// are a pure function of (planner, case, episodes, master_seed).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_suite<F>(
    make_planner: F,
    case: TestCase,
    episodes: usize,
    master_seed: u64,
    sim: &SimConfig,
    lidar: &LidarConfig,
    dt: f64,
    keep_trajectories: usize,
) -> SuiteResult
where
    F: Fn() -> Box<dyn Planner> + Sync,
{
    assert!(episodes >= 1, "suite needs at least one episode");
    let eval_sim = SimConfig {
        enforce_boundary: true,
        ..sim.clone()
    };
    let placement = corner_placement(eval_sim.map_size);

    type Kept = Option<(usize, Environment, EpisodeRecord)>;
    let mut results: Vec<(EpisodeSummary, Kept)> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let env_seed = derive_seed(master_seed, Stream::EnvGen, i as u64);
            let policy_seed = derive_seed(master_seed, Stream::EvalPolicy, i as u64);
            let mut env = generate(case.phase(), env_seed, &eval_sim, placement)
                .expect("suite environment generation failed");
            let initial = env.clone();
            let mut planner = make_planner();
            planner.begin_episode(policy_seed);
            let record = run_episode(planner.as_mut(), &mut env, &eval_sim, lidar, dt);
            let calls = record.plan_times_ms.len();
            let summary = EpisodeSummary {
                episode: i,
                env_seed,
                outcome: record.outcome,
                steps: record.step_count(),
                time: record.time(),
                energy: energy(&record),
                cumulative_reward: record.cumulative_reward(),
                mean_plan_ms: if calls == 0 {
                    0.0
                } else {
                    record.plan_times_ms.iter().sum::<f64>() / calls as f64
                },
                max_plan_ms: record.plan_times_ms.iter().copied().fold(0.0, f64::max),
            };
            let kept = if i < keep_trajectories { Some((i, initial, record)) } else { None };
            (summary, kept)
        })
        .collect();

    let mut summaries = Vec::with_capacity(episodes);
    let mut trajectories = Vec::new();
    for (summary, kept) in results.drain(..) {
        summaries.push(summary);
        if let Some(t) = kept {
            trajectories.push(t);
        }
    }
    SuiteResult {
        metrics: aggregate(&summaries),
        summaries,
        trajectories,
    }
}

/// Per-step trajectory CSV: `t,x,y,theta,speed,a,w,reward,phi`.
pub fn write_episode_csv<W: Write>(record: &EpisodeRecord, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,x,y,theta,speed,a,w,reward,phi")?;
    for s in &record.steps {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.t, s.x, s.y, s.heading, s.speed, s.accel, s.turn_rate, s.reward, s.phi
        )?;
    }
    Ok(())
}

/// Parse a trajectory CSV written by `write_episode_csv`.
pub fn read_episode_csv<R: std::io::Read>(input: R) -> Result<Vec<StepRecord>, csv::Error> {
    let mut reader = csv::Reader::from_reader(input);
    let mut steps = Vec::new();
    for row in reader.deserialize::<(f64, f64, f64, f64, f64, f64, f64, f64, f64)>() {
        let (t, x, y, heading, speed, accel, turn_rate, reward, phi) = row?;
        steps.push(StepRecord {
            t,
            x,
            y,
            heading,
            speed,
            accel,
            turn_rate,
            reward,
            phi,
        });
    }
    Ok(steps)
}

/// Per-episode summary CSV.
pub fn write_summaries_csv<W: Write>(
    summaries: &[EpisodeSummary],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "episode,env_seed,outcome,steps,time,energy,reward")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.episode,
            s.env_seed,
            s.outcome.label(),
            s.steps,
            s.time,
            s.energy,
            s.cumulative_reward
        )?;
    }
    Ok(())
}

/// One-row suite summary CSV. Runtime statistics are deliberately not
/// written here: they vary run to run, and the exported CSVs are
/// byte-reproducible functions of (planner, config, seed).
pub fn write_suite_csv<W: Write>(
    planner_label: &str,
    case: TestCase,
    master_seed: u64,
    metrics: &SuiteMetrics,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "planner,case,episodes,seed,success_rate,out_of_bounds_rate,collision_rate,timeout_rate,avg_time,avg_energy"
    )?;
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        planner_label,
        case.number(),
        metrics.episodes,
        master_seed,
        metrics.success_rate,
        metrics.out_of_bounds_rate,
        metrics.collision_rate,
        metrics.timeout_rate,
        fmt_opt(metrics.avg_time),
        fmt_opt(metrics.avg_energy)
    )?;
    Ok(())
}
