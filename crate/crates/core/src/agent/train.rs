//! Curriculum training loop: episodic interaction with epsilon-greedy
//! exploration, replay learning, hard target syncs, and periodic evaluation
//! on a fixed suite of environments.

use super::losses::{dqn_loss, iqn_loss, IqnLossSamples};
use super::policy::{argmax_lowest, select_action_iqn};
use super::{epsilon_schedule, ReplayBuffer, TrainConfig, Transition};
use crate::env::{generate, Action, Environment, Outcome, Phase, Placement, SimConfig, ACTION_COUNT};
use crate::nn::{adam_step, AdamParams, AdamState, Checkpoint, MlpModel, ModelKind, Topology};
use crate::seed::{derive_rng, derive_seed, Stream};
use crate::sensing::{observe, LidarConfig};
use crate::vec2::Vec2;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// One row of the evaluation log: scores over the fixed suite, overall and
/// per difficulty phase.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub step: u64,
    pub mean_reward: f64,
    pub success_rate: f64,
    pub phase_mean_reward: [f64; 3],
    pub phase_success_rate: [f64; 3],
}

/// Progress notifications emitted by the training loop.
pub enum TrainEvent<'a> {
    /// A checkpoint to persist (initial, periodic, and final).
    Checkpoint(&'a Checkpoint),
    /// A new evaluation-log row.
    Eval(&'a EvalPoint),
    /// Episode finished; useful for progress logging.
    Episode {
        step: u64,
        episode: u64,
        reward: f64,
        outcome: Outcome,
    },
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub eval_log: Vec<EvalPoint>,
    pub final_checkpoint: Checkpoint,
    pub episodes: u64,
    pub gradient_steps: u64,
}

/// The evaluation placement mirrors the experiment protocol: start at the
/// lower left, goal at the top right of the map.
pub fn corner_placement(map_size: f64) -> Placement {
    Placement::Fixed {
        start: Vec2::new(0.1 * map_size, 0.1 * map_size),
        goal: Vec2::new(0.9 * map_size, 0.9 * map_size),
    }
}

pub struct Trainer {
    kind: ModelKind,
    cfg: TrainConfig,
    sim: SimConfig,
    lidar: LidarConfig,
    seed: u64,
    start_step: u64,
    online: MlpModel<f32>,
    target: MlpModel<f32>,
    adam: AdamState<f32>,
    buffer: ReplayBuffer,
    rng: ChaCha20Rng,
    eval_envs: Vec<(Phase, Environment)>,
    gradient_steps: u64,
    episodes: u64,
}

impl Trainer {
    pub fn new(kind: ModelKind, cfg: TrainConfig, sim: SimConfig, lidar: LidarConfig, seed: u64) -> Self {
        let topology = Topology::standard(lidar.beams);
        let online = MlpModel::<f32>::new(kind, topology, seed);
        Self::from_model(kind, cfg, sim, lidar, seed, online, 0)
    }

    /// Continue a run from a saved checkpoint. The replay buffer and
    /// optimizer state restart empty, so a resumed run is a fresh
    /// continuation rather than a replay of the interrupted one.
    pub fn resume(
        cfg: TrainConfig,
        sim: SimConfig,
        lidar: LidarConfig,
        checkpoint: &Checkpoint,
    ) -> Result<Self, crate::nn::CheckpointError> {
        let model = checkpoint.to_model()?;
        Ok(Self::from_model(
            model.kind,
            cfg,
            sim,
            lidar,
            checkpoint.seed,
            model,
            checkpoint.step,
        ))
    }

    fn from_model(
        kind: ModelKind,
        cfg: TrainConfig,
        mut sim: SimConfig,
        lidar: LidarConfig,
        seed: u64,
        online: MlpModel<f32>,
        start_step: u64,
    ) -> Self {
        // The boundary exists only in evaluation experiments.
        sim.enforce_boundary = false;
        let target = online.clone();
        let adam = AdamState::new(
            &online,
            AdamParams {
                learning_rate: cfg.learning_rate,
                ..AdamParams::default()
            },
        );
        let buffer = ReplayBuffer::new(cfg.buffer_capacity);
        let rng = derive_rng(seed, Stream::Train, start_step);
        let eval_envs = fixed_eval_suite(&cfg, &sim, seed);
        Trainer {
            kind,
            cfg,
            sim,
            lidar,
            seed,
            start_step,
            online,
            target,
            adam,
            buffer,
            rng,
            eval_envs,
            gradient_steps: 0,
            episodes: 0,
        }
    }

    pub fn model(&self) -> &MlpModel<f32> {
        &self.online
    }

    fn new_episode(&mut self, step: u64) -> Environment {
        let phase = self.cfg.phase_at(step);
        let episode_seed = derive_seed(self.seed, Stream::EnvGen, self.episodes);
        self.episodes += 1;
        generate(phase, episode_seed, &self.sim, Placement::Random)
            .expect("training environment generation failed")
    }

    fn greedy_action(&mut self, features: &[f32]) -> usize {
        match self.kind {
            ModelKind::Dqn => argmax_lowest(&self.online.q_values(features)),
            ModelKind::Iqn => {
                let model = &self.online;
                select_action_iqn(
                    |taus| model.quantile_values(features, taus),
                    self.cfg.phi_train,
                    self.cfg.k_action,
                    &mut self.rng,
                )
            }
        }
    }

    fn gradient_step(&mut self) {
        let indices = self.buffer.sample_indices(self.cfg.batch_size, &mut self.rng);
        let batch: Vec<&Transition> = indices.iter().map(|&i| self.buffer.get(i)).collect();
        let (_, grads) = match self.kind {
            ModelKind::Dqn => dqn_loss(&self.online, &self.target, &batch, self.cfg.gamma),
            ModelKind::Iqn => {
                let samples = IqnLossSamples::draw(
                    &mut self.rng,
                    batch.len(),
                    self.cfg.n_online,
                    self.cfg.n_target,
                    self.cfg.k_action,
                );
                iqn_loss(
                    &self.online,
                    &self.target,
                    &batch,
                    &samples,
                    self.cfg.gamma,
                    self.cfg.phi_train,
                    self.cfg.kappa,
                )
            }
        };
        adam_step(&mut self.online, &grads, &mut self.adam);
        self.gradient_steps += 1;
        if self.gradient_steps.is_multiple_of(self.cfg.target_sync_every) {
            self.target = self.online.clone();
        }
    }

    /// Greedy rollout score over the fixed evaluation suite.
    fn evaluate(&self, step: u64) -> EvalPoint {
        let mut phase_rewards = [0.0f64; 3];
        let mut phase_successes = [0usize; 3];
        let mut phase_counts = [0usize; 3];
        let eval_round = step / self.cfg.eval_every.max(1);
        for (i, (phase, base)) in self.eval_envs.iter().enumerate() {
            let mut rng = derive_rng(
                self.seed,
                Stream::EvalPolicy,
                eval_round * self.eval_envs.len() as u64 + i as u64,
            );
            let mut env = base.clone();
            let mut cumulative = 0.0;
            let mut outcome = env.status(&self.sim);
            while !outcome.is_terminal() {
                let features = observe(&env, &self.lidar).encode(&self.lidar);
                let action = match self.kind {
                    ModelKind::Dqn => argmax_lowest(&self.online.q_values(&features)),
                    ModelKind::Iqn => select_action_iqn(
                        |taus| self.online.quantile_values(&features, taus),
                        1.0,
                        self.cfg.k_action,
                        &mut rng,
                    ),
                };
                let prev = env.robot;
                outcome = env.step(Action::from_index(action), self.cfg.control_dt, &self.sim);
                cumulative += crate::env::reward(&prev, &env.robot, env.goal, outcome, &self.sim.reward);
            }
            let p = phase.number() as usize - 1;
            phase_counts[p] += 1;
            phase_rewards[p] += cumulative;
            if outcome == Outcome::Goal {
                phase_successes[p] += 1;
            }
        }
        let total: usize = phase_counts.iter().sum();
        let success: usize = phase_successes.iter().sum();
        let reward_sum: f64 = phase_rewards.iter().sum();
        EvalPoint {
            step,
            mean_reward: reward_sum / total.max(1) as f64,
            success_rate: success as f64 / total.max(1) as f64,
            phase_mean_reward: std::array::from_fn(|p| {
                phase_rewards[p] / phase_counts[p].max(1) as f64
            }),
            phase_success_rate: std::array::from_fn(|p| {
                phase_successes[p] as f64 / phase_counts[p].max(1) as f64
            }),
        }
    }

    /// Run the training loop, emitting checkpoints and evaluation rows
    /// through `on_event`. I/O failures from the sink abort the run.
    pub fn run<F>(&mut self, mut on_event: F) -> std::io::Result<TrainResult>
    where
        F: FnMut(TrainEvent) -> std::io::Result<()>,
    {
        let mut eval_log = Vec::new();
        let initial = Checkpoint::from_model(&self.online, self.seed, self.start_step);
        on_event(TrainEvent::Checkpoint(&initial))?;

        let mut env = self.new_episode(self.start_step);
        let mut features = observe(&env, &self.lidar).encode(&self.lidar);
        let mut episode_reward = 0.0;

        for step in self.start_step..self.cfg.total_steps {
            let eps = epsilon_schedule(
                step,
                self.cfg.total_steps,
                self.cfg.epsilon_start,
                self.cfg.epsilon_end,
                self.cfg.epsilon_fraction,
            );
            let action_index = if self.rng.gen::<f64>() < eps {
                self.rng.gen_range(0..ACTION_COUNT)
            } else {
                self.greedy_action(&features)
            };
            let prev = env.robot;
            let outcome = env.step(
                Action::from_index(action_index),
                self.cfg.control_dt,
                &self.sim,
            );
            let r = crate::env::reward(&prev, &env.robot, env.goal, outcome, &self.sim.reward);
            episode_reward += r;
            let next_features = observe(&env, &self.lidar).encode(&self.lidar);
            self.buffer.push(Transition {
                obs: features.clone().into_boxed_slice(),
                action: action_index as u8,
                reward: r as f32,
                next_obs: next_features.clone().into_boxed_slice(),
                // Step-budget truncation is not a real terminal state.
                terminal: matches!(outcome, Outcome::Goal | Outcome::Collision),
            });

            if outcome.is_terminal() {
                on_event(TrainEvent::Episode {
                    step,
                    episode: self.episodes,
                    reward: episode_reward,
                    outcome,
                })?;
                episode_reward = 0.0;
                env = self.new_episode(step);
                features = observe(&env, &self.lidar).encode(&self.lidar);
            } else {
                features = next_features;
            }

            if self.buffer.len() >= self.cfg.warmup_transitions
                && (step + 1).is_multiple_of(self.cfg.train_every)
            {
                self.gradient_step();
            }

            if (step + 1).is_multiple_of(self.cfg.eval_every) {
                let point = self.evaluate(step + 1);
                on_event(TrainEvent::Eval(&point))?;
                let ckpt = Checkpoint::from_model(&self.online, self.seed, step + 1);
                on_event(TrainEvent::Checkpoint(&ckpt))?;
                eval_log.push(point);
            }
        }

        let final_step = self.cfg.total_steps.max(self.start_step);
        let final_checkpoint = Checkpoint::from_model(&self.online, self.seed, final_step);
        if self.cfg.total_steps > self.start_step
            && !self.cfg.total_steps.is_multiple_of(self.cfg.eval_every)
        {
            on_event(TrainEvent::Checkpoint(&final_checkpoint))?;
        }
        Ok(TrainResult {
            eval_log,
            final_checkpoint,
            episodes: self.episodes,
            gradient_steps: self.gradient_steps,
        })
    }
}

/// The fixed evaluation suite: `eval_envs_per_phase` environments per
/// difficulty, lower-left start and top-right goal.
fn fixed_eval_suite(cfg: &TrainConfig, sim: &SimConfig, seed: u64) -> Vec<(Phase, Environment)> {
    let placement = corner_placement(sim.map_size);
    let mut envs = Vec::new();
    for (p, phase) in Phase::ALL.iter().enumerate() {
        for i in 0..cfg.eval_envs_per_phase {
            let env_seed = derive_seed(seed, Stream::EvalEnv, (p * cfg.eval_envs_per_phase + i) as u64);
            let env = generate(*phase, env_seed, sim, placement)
                .expect("evaluation environment generation failed");
            envs.push((*phase, env));
        }
    }
    envs
}
