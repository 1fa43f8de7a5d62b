//! Value-based RL agents: replay memory, exploration schedule, IQN and DQN
//! losses, risk-sensitive action selection, and the curriculum training loop.

mod losses;
mod policy;
mod train;

pub use losses::{dqn_loss, iqn_loss, quantile_huber, IqnLossSamples};
pub use policy::{adaptive_phi, argmax_lowest, cvar_distort, mean_per_action, select_action_iqn};
pub use train::{corner_placement, EvalPoint, TrainEvent, TrainResult, Trainer};

use serde::{Deserialize, Serialize};

/// One experience tuple. Observations are stored pre-encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Box<[f32]>,
    pub action: u8,
    pub reward: f32,
    pub next_obs: Box<[f32]>,
    /// True when the next state ended the episode for real (goal or
    /// collision). Step-budget truncation keeps bootstrapping.
    pub terminal: bool,
}

/// Uniform-sampling ring buffer with FIFO eviction at capacity.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    write: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::new(),
            capacity,
            write: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.write] = t;
        }
        self.write = (self.write + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Uniform batch indices, with replacement.
    pub fn sample_indices<R: rand::Rng>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        (0..batch).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    /// Oldest still-buffered transition, for eviction tests.
    pub fn contains(&self, t: &Transition) -> bool {
        self.items.iter().any(|x| x == t)
    }
}

/// Exploration rate: linear from `start` to `end` over the first
/// `fraction` of training, then constant.
pub fn epsilon_schedule(step: u64, total: u64, start: f64, end: f64, fraction: f64) -> f64 {
    let decay_steps = (total as f64 * fraction).round();
    if decay_steps <= 0.0 || step as f64 >= decay_steps {
        return end;
    }
    start + (end - start) * step as f64 / decay_steps
}

/// The standard schedule: 1.0 down to 0.05 over the first 10% of steps.
pub fn epsilon_at(step: u64, total: u64) -> f64 {
    epsilon_schedule(step, total, 1.0, 0.05, 0.1)
}

/// Training hyperparameters. Defaults are the full-scale settings; scaled
/// runs override `total_steps` and the curriculum boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: u64,
    /// Control period during training, seconds.
    pub control_dt: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    /// Quantile samples for the online term of the loss (N).
    pub n_online: usize,
    /// Quantile samples for the target term of the loss (N').
    pub n_target: usize,
    /// Quantile samples for policy evaluation (K).
    pub k_action: usize,
    /// CVaR threshold used by the behavior/target policy during training.
    pub phi_train: f64,
    /// Huber threshold of the quantile loss.
    pub kappa: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of total steps over which epsilon decays.
    pub epsilon_fraction: f64,
    /// Buffered transitions required before learning starts.
    pub warmup_transitions: usize,
    /// Environment steps per gradient step.
    pub train_every: u64,
    /// Gradient steps between hard target-network syncs.
    pub target_sync_every: u64,
    /// Environment steps between evaluations on the fixed suite.
    pub eval_every: u64,
    /// Fixed evaluation environments per difficulty phase.
    pub eval_envs_per_phase: usize,
    /// Steps at which difficulty moves to phase 2 and phase 3.
    pub phase_boundaries: [u64; 2],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 3_000_000,
            control_dt: 1.0,
            batch_size: 32,
            gamma: 0.99,
            learning_rate: 1e-4,
            buffer_capacity: 1_000_000,
            n_online: 8,
            n_target: 8,
            k_action: 32,
            phi_train: 1.0,
            kappa: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.1,
            warmup_transitions: 5000,
            train_every: 4,
            target_sync_every: 1000,
            eval_every: 10_000,
            eval_envs_per_phase: 10,
            phase_boundaries: [1_000_000, 2_000_000],
        }
    }
}

impl TrainConfig {
    pub fn phase_at(&self, step: u64) -> crate::env::Phase {
        if step < self.phase_boundaries[0] {
            crate::env::Phase::One
        } else if step < self.phase_boundaries[1] {
            crate::env::Phase::Two
        } else {
            crate::env::Phase::Three
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transition(tag: f32) -> Transition {
        Transition {
            obs: vec![tag; 3].into_boxed_slice(),
            action: 0,
            reward: tag,
            next_obs: vec![tag; 3].into_boxed_slice(),
            terminal: false,
        }
    }

    #[test]
    fn buffer_grows_then_evicts_fifo() {
        let mut buf = ReplayBuffer::new(5);
        for i in 0..5 {
            buf.push(transition(i as f32));
            assert_eq!(buf.len(), i + 1);
        }
        for i in 5..8 {
            buf.push(transition(i as f32));
        }
        assert_eq!(buf.len(), 5);
        // The three oldest are gone, the rest remain.
        for i in 0..3 {
            assert!(!buf.contains(&transition(i as f32)), "item {i} should be evicted");
        }
        for i in 3..8 {
            assert!(buf.contains(&transition(i as f32)), "item {i} should remain");
        }
    }

    #[test]
    fn epsilon_endpoints_and_midpoint() {
        assert_eq!(epsilon_at(0, 1000), 1.0);
        assert_eq!(epsilon_at(100, 1000), 0.05);
        assert_eq!(epsilon_at(500, 1000), 0.05);
        let mid = epsilon_at(50, 1000);
        assert!((mid - 0.525).abs() < 1e-12);
    }

    #[test]
    fn epsilon_handles_zero_total() {
        assert_eq!(epsilon_at(0, 0), 0.05);
    }

    #[test]
    fn curriculum_partitions_steps() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.phase_at(0), crate::env::Phase::One);
        assert_eq!(cfg.phase_at(999_999), crate::env::Phase::One);
        assert_eq!(cfg.phase_at(1_000_000), crate::env::Phase::Two);
        assert_eq!(cfg.phase_at(2_000_000), crate::env::Phase::Three);
        assert_eq!(cfg.phase_at(2_999_999), crate::env::Phase::Three);
    }
}
