//! Command-line entry point: train agents, evaluate planners over seeded
//! suites, render trajectories, and inspect checkpoints.

mod config;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use config::RunConfig;
use marinenav::agent::{TrainEvent, Trainer};
use marinenav::env::Environment;
use marinenav::eval::{
    evaluate_suite, read_episode_csv, write_episode_csv, write_suite_csv, write_summaries_csv,
    SuiteResult, TestCase,
};
use marinenav::nn::{Checkpoint, ModelKind};
use marinenav::planner::{
    ApfPlanner, BugPlanner, DqnPlanner, IqnPlanner, Planner, RiskMode,
};
use marinenav::render::render_svg;
use marinenav::vec2::Vec2;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "marinenav",
    version,
    about = "Marine navigation simulator: vortex currents, RL and classical local planners"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AgentKind {
    Iqn,
    Dqn,
}

impl AgentKind {
    fn model_kind(self) -> ModelKind {
        match self {
            AgentKind::Iqn => ModelKind::Iqn,
            AgentKind::Dqn => ModelKind::Dqn,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; writes checkpoints, an evaluation log, and a
    /// progress log into the output directory.
    Train {
        #[arg(long, value_enum)]
        agent: AgentKind,
        /// Existing output directory for checkpoints and logs.
        #[arg(long)]
        out: PathBuf,
        /// TOML configuration document; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Total environment steps (overrides the config).
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from checkpoint_latest.json in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a planner over a seeded suite of environments.
    Eval {
        /// Planner: apf, ba, dqn, iqn:adaptive, or iqn:<phi> with phi in (0,1].
        #[arg(long)]
        planner: String,
        /// Checkpoint file (required for iqn and dqn planners).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Existing output directory for the result CSV files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Test case 1 or 2 (overrides the config).
        #[arg(long)]
        case: Option<u8>,
        /// Number of episodes (overrides the config).
        #[arg(long)]
        n: Option<usize>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Control period in seconds (overrides the config).
        #[arg(long)]
        dt: Option<f64>,
        /// Write the first N episode trajectories and snapshots.
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Render an episode trajectory over its environment snapshot as SVG.
    Render {
        /// Per-step trajectory CSV (may contain zero data rows).
        #[arg(long)]
        episode: PathBuf,
        /// Environment snapshot JSON the episode was produced in.
        #[arg(long)]
        snapshot: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print checkpoint metadata.
    InspectCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

/// Marker for problems with the invocation or configuration (exit code 2)
/// rather than runtime failures (exit code 1).
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        let code = if err.chain().any(|c| c.is::<UsageError>()) {
            2
        } else {
            1
        };
        std::process::exit(code);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            agent,
            out,
            config,
            seed,
            steps,
            resume,
        } => cmd_train(agent, &out, config.as_deref(), seed, steps, resume),
        Command::Eval {
            planner,
            checkpoint,
            out,
            config,
            case,
            n,
            seed,
            dt,
            trajectories,
        } => cmd_eval(
            &planner,
            checkpoint.as_deref(),
            &out,
            config.as_deref(),
            case,
            n,
            seed,
            dt,
            trajectories,
        ),
        Command::Render {
            episode,
            snapshot,
            out,
            config,
        } => cmd_render(&episode, &snapshot, &out, config.as_deref()),
        Command::InspectCheckpoint { checkpoint } => cmd_inspect(&checkpoint),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    Ok(cfg)
}

fn require_out_dir(out: &Path) -> Result<()> {
    if !out.is_dir() {
        return Err(usage(format!(
            "output directory {} does not exist",
            out.display()
        )));
    }
    Ok(())
}

fn cmd_train(
    agent: AgentKind,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    steps: Option<u64>,
    resume: bool,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = steps {
        cfg.train.total_steps = t;
    }
    cfg.validate().map_err(|e| usage(format!("{e:#}")))?;
    require_out_dir(out)?;

    let kind = agent.model_kind();
    let mut trainer = if resume {
        let latest = out.join("checkpoint_latest.json");
        let ckpt = Checkpoint::load(&latest)
            .map_err(|e| usage(format!("loading {}: {e}", latest.display())))?;
        if ckpt.kind() != Some(kind) {
            return Err(usage(format!(
                "checkpoint agent {:?} does not match --agent",
                ckpt.agent
            )));
        }
        Trainer::resume(cfg.train.clone(), cfg.sim.clone(), cfg.lidar.clone(), &ckpt)
            .map_err(|e| usage(e.to_string()))?
    } else {
        Trainer::new(
            kind,
            cfg.train.clone(),
            cfg.sim.clone(),
            cfg.lidar.clone(),
            cfg.seed,
        )
    };

    let mut eval_log = fs::File::create(out.join("eval_log.csv"))?;
    writeln!(
        eval_log,
        "step,mean_reward,success_rate,p1_reward,p1_success,p2_reward,p2_success,p3_reward,p3_success"
    )?;
    let mut progress = fs::File::create(out.join("train.log"))?;

    let result = trainer.run(|event| -> std::io::Result<()> {
        match event {
            TrainEvent::Checkpoint(ckpt) => {
                let text = ckpt.to_json();
                fs::write(out.join(format!("checkpoint_step_{}.json", ckpt.step)), &text)?;
                fs::write(out.join("checkpoint_latest.json"), &text)?;
            }
            TrainEvent::Eval(pt) => {
                writeln!(
                    eval_log,
                    "{},{},{},{},{},{},{},{},{}",
                    pt.step,
                    pt.mean_reward,
                    pt.success_rate,
                    pt.phase_mean_reward[0],
                    pt.phase_success_rate[0],
                    pt.phase_mean_reward[1],
                    pt.phase_success_rate[1],
                    pt.phase_mean_reward[2],
                    pt.phase_success_rate[2],
                )?;
                eval_log.flush()?;
                writeln!(
                    progress,
                    "eval step={} mean_reward={:.3} success_rate={:.3}",
                    pt.step, pt.mean_reward, pt.success_rate
                )?;
            }
            TrainEvent::Episode {
                step,
                episode,
                reward,
                outcome,
            } => {
                writeln!(
                    progress,
                    "episode step={step} episode={episode} reward={reward:.3} outcome={}",
                    outcome.label()
                )?;
            }
        }
        Ok(())
    })?;

    println!(
        "trained {} for {} steps: {} episodes, {} gradient steps",
        kind.label(),
        cfg.train.total_steps,
        result.episodes,
        result.gradient_steps
    );
    if let Some(last) = result.eval_log.last() {
        println!(
            "final evaluation: mean reward {:.2}, success rate {:.2}",
            last.mean_reward, last.success_rate
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlannerSpec {
    IqnFixed(f64),
    IqnAdaptive,
    Dqn,
    Apf,
    Ba,
}

impl PlannerSpec {
    fn parse(s: &str) -> Result<PlannerSpec> {
        match s {
            "apf" => Ok(PlannerSpec::Apf),
            "ba" => Ok(PlannerSpec::Ba),
            "dqn" => Ok(PlannerSpec::Dqn),
            "iqn:adaptive" => Ok(PlannerSpec::IqnAdaptive),
            other => {
                if let Some(rest) = other.strip_prefix("iqn:") {
                    let phi: f64 = rest.parse().map_err(|_| {
                        usage(format!("invalid CVaR threshold {rest:?} in planner spec"))
                    })?;
                    if phi <= 0.0 || phi > 1.0 {
                        return Err(usage("CVaR threshold must lie in (0, 1]"));
                    }
                    Ok(PlannerSpec::IqnFixed(phi))
                } else {
                    Err(usage(format!(
                        "unknown planner {other:?}; expected apf, ba, dqn, iqn:adaptive, or iqn:<phi>"
                    )))
                }
            }
        }
    }

    fn label(&self) -> String {
        match self {
            PlannerSpec::IqnFixed(phi) => format!("iqn:{phi}"),
            PlannerSpec::IqnAdaptive => "iqn:adaptive".to_string(),
            PlannerSpec::Dqn => "dqn".to_string(),
            PlannerSpec::Apf => "apf".to_string(),
            PlannerSpec::Ba => "ba".to_string(),
        }
    }

    fn needs_checkpoint(&self) -> bool {
        matches!(
            self,
            PlannerSpec::IqnFixed(_) | PlannerSpec::IqnAdaptive | PlannerSpec::Dqn
        )
    }
}

fn load_model(
    spec: PlannerSpec,
    checkpoint: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Option<Arc<marinenav::nn::MlpModel<f32>>>> {
    if !spec.needs_checkpoint() {
        return Ok(None);
    }
    let path = checkpoint.ok_or_else(|| {
        usage(format!("planner {} requires --checkpoint", spec.label()))
    })?;
    let ckpt = Checkpoint::load(path)
        .map_err(|e| usage(format!("loading {}: {e}", path.display())))?;
    let model = ckpt.to_model().map_err(|e| usage(e.to_string()))?;
    let expected = match spec {
        PlannerSpec::Dqn => ModelKind::Dqn,
        _ => ModelKind::Iqn,
    };
    if model.kind != expected {
        return Err(usage(format!(
            "checkpoint holds a {} model but planner {} needs {}",
            model.kind.label(),
            spec.label(),
            expected.label()
        )));
    }
    if model.topology.lidar_in != cfg.lidar.beams {
        return Err(usage(format!(
            "checkpoint was trained with {} beams but lidar.beams is {}",
            model.topology.lidar_in, cfg.lidar.beams
        )));
    }
    Ok(Some(Arc::new(model)))
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    planner: &str,
    checkpoint: Option<&Path>,
    out: &Path,
    config: Option<&Path>,
    case: Option<u8>,
    n: Option<usize>,
    seed: Option<u64>,
    dt: Option<f64>,
    trajectories: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(c) = case {
        cfg.eval.case = c;
    }
    if let Some(n) = n {
        cfg.eval.episodes = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = dt {
        cfg.eval.dt = d;
    }
    if let Some(t) = trajectories {
        cfg.eval.trajectories = t;
    }
    cfg.validate().map_err(|e| usage(format!("{e:#}")))?;
    require_out_dir(out)?;

    let spec = PlannerSpec::parse(planner)?;
    let model = load_model(spec, checkpoint, &cfg)?;
    let test_case = TestCase::from_number(cfg.eval.case).expect("validated");

    let lidar = cfg.lidar.clone();
    let make_planner = || -> Box<dyn Planner> {
        match spec {
            PlannerSpec::Apf => Box::new(ApfPlanner::new(cfg.apf, lidar.clone(), cfg.eval.dt)),
            PlannerSpec::Ba => Box::new(BugPlanner::new(cfg.bug, lidar.clone(), cfg.eval.dt)),
            PlannerSpec::Dqn => Box::new(
                DqnPlanner::new(model.clone().expect("model loaded"), lidar.clone())
                    .expect("kind checked"),
            ),
            PlannerSpec::IqnFixed(phi) => Box::new(
                IqnPlanner::new(
                    model.clone().expect("model loaded"),
                    RiskMode::Fixed(phi),
                    cfg.eval.k,
                    lidar.clone(),
                )
                .expect("kind checked"),
            ),
            PlannerSpec::IqnAdaptive => Box::new(
                IqnPlanner::new(
                    model.clone().expect("model loaded"),
                    RiskMode::Adaptive,
                    cfg.eval.k,
                    lidar.clone(),
                )
                .expect("kind checked"),
            ),
        }
    };

    let result = evaluate_suite(
        make_planner,
        test_case,
        cfg.eval.episodes,
        cfg.seed,
        &cfg.sim,
        &cfg.lidar,
        cfg.eval.dt,
        cfg.eval.trajectories,
    );

    write_outputs(out, &spec.label(), test_case, cfg.seed, &result)?;
    print_report(&spec.label(), &result);
    Ok(())
}

fn write_outputs(
    out: &Path,
    label: &str,
    case: TestCase,
    seed: u64,
    result: &SuiteResult,
) -> Result<()> {
    let mut summary = Vec::new();
    write_suite_csv(label, case, seed, &result.metrics, &mut summary)?;
    fs::write(out.join("summary.csv"), summary)?;

    let mut episodes = Vec::new();
    write_summaries_csv(&result.summaries, &mut episodes)?;
    fs::write(out.join("episodes.csv"), episodes)?;

    for (index, env, record) in &result.trajectories {
        let mut csv = Vec::new();
        write_episode_csv(record, &mut csv)?;
        fs::write(out.join(format!("episode_{index:04}.csv")), csv)?;
        fs::write(
            out.join(format!("episode_{index:04}.env.json")),
            env.to_snapshot(),
        )?;
    }
    Ok(())
}

fn print_report(label: &str, result: &SuiteResult) {
    let m = &result.metrics;
    let fmt_opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.2}"),
        None => "-".to_string(),
    };
    println!("planner        success  out-of-bounds  avg time (s)  avg energy");
    println!(
        "{label:<14} {:<8.3} {:<14.3} {:<13} {}",
        m.success_rate,
        m.out_of_bounds_rate,
        fmt_opt(m.avg_time),
        fmt_opt(m.avg_energy)
    );
    println!(
        "runtime per action: mean {:.3} ms, max {:.3} ms",
        m.mean_plan_ms, m.max_plan_ms
    );
}

fn cmd_render(
    episode: &Path,
    snapshot: &Path,
    out: &Path,
    config: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let snapshot_text = fs::read_to_string(snapshot)
        .with_context(|| format!("reading snapshot {}", snapshot.display()))?;
    let env = Environment::from_snapshot(&snapshot_text)
        .map_err(|e| usage(format!("malformed snapshot {}: {e}", snapshot.display())))?;
    let file = fs::File::open(episode)
        .with_context(|| format!("reading episode {}", episode.display()))?;
    let steps = read_episode_csv(file)
        .map_err(|e| usage(format!("malformed episode CSV {}: {e}", episode.display())))?;

    // Reject trajectories that did not come from this snapshot: replaying
    // each recorded command through the snapshot's own dynamics must
    // reproduce the recorded positions.
    let mut replay = env.clone();
    let mut prev_t = 0.0;
    for (i, s) in steps.iter().enumerate() {
        let dt = s.t - prev_t;
        if dt <= 0.0 {
            return Err(usage(format!("episode CSV row {i}: non-increasing time")));
        }
        let on_grid = |v: f64, grid: &[f64]| grid.contains(&v);
        if !on_grid(s.accel, &marinenav::env::ACCELS)
            || !on_grid(s.turn_rate, &marinenav::env::TURN_RATES)
        {
            return Err(usage(format!(
                "episode row {i}: command ({}, {}) is not on the discrete action grid",
                s.accel, s.turn_rate
            )));
        }
        replay.step(
            marinenav::env::Action {
                accel: s.accel,
                turn_rate: s.turn_rate,
            },
            dt,
            &cfg.sim,
        );
        let recorded = Vec2::new(s.x, s.y);
        let gap = (replay.robot.position - recorded).norm();
        if gap > 1e-6 {
            return Err(usage(format!(
                "episode row {i} is {gap:.3} m away from the replayed dynamics; \
                 trajectory does not match this snapshot"
            )));
        }
        prev_t = s.t;
    }

    let svg = render_svg(&env, &steps, cfg.sim.goal_radius, cfg.sim.boundary_margin);
    fs::write(out, svg).with_context(|| format!("writing {}", out.display()))?;
    println!("rendered {} steps to {}", steps.len(), out.display());
    Ok(())
}

fn cmd_inspect(checkpoint: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .map_err(|e| usage(format!("loading {}: {e}", checkpoint.display())))?;
    println!("agent: {}", ckpt.agent);
    println!("seed: {}", ckpt.seed);
    println!("step: {}", ckpt.step);
    let t = &ckpt.topology;
    println!(
        "inputs: velocity {} + goal {} + lidar {}",
        t.velocity_in, t.goal_in, t.lidar_in
    );
    println!(
        "widths: encoders {}/{}/{} -> state {} -> hidden {} -> actions {}",
        t.velocity_hidden, t.goal_hidden, t.lidar_hidden, t.state_dim, t.hidden_dim, t.actions
    );
    let mut params = 0usize;
    for layer in &ckpt.layers {
        println!(
            "layer {}: {}x{} + {} bias",
            layer.name,
            layer.rows,
            layer.cols,
            layer.bias.len()
        );
        params += layer.weights.len() + layer.bias.len();
    }
    println!("parameters: {params}");
    Ok(())
}
