//! Local path planners behind one interface: observation in, discrete
//! command out. Classical reactive baselines live in submodules; the RL
//! planners wrap trained value models.

mod apf;
mod bug;

pub use apf::{apf_action, apf_force, ApfParams, ApfPlanner};
pub use bug::{ba_action, BugMode, BugParams, BugPlanner};

use crate::agent::{adaptive_phi, argmax_lowest, select_action_iqn};
use crate::env::{Action, ACCELS, TURN_RATES};
use crate::nn::{MlpModel, ModelKind};
use crate::sensing::{LidarConfig, Observation};
use crate::vec2::wrap_angle;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::sync::Arc;
use thiserror::Error;

/// A local planner driving one episode at a time.
pub trait Planner: Send {
    /// Reset per-episode state. `seed` feeds any policy randomness.
    fn begin_episode(&mut self, seed: u64);

    /// Choose the next command from the observation and the robot's own
    /// commanded speed.
    fn act(&mut self, obs: &Observation, steering_speed: f64) -> Action;

    /// CVaR threshold behind the last decision; 1.0 for risk-neutral
    /// planners.
    fn last_phi(&self) -> f64 {
        1.0
    }
}

/// Turn-rate command whose heading change over one control step lands
/// closest to the desired angle difference. Ties prefer the weaker command.
pub fn nearest_turn_rate(angle_delta: f64, dt: f64) -> f64 {
    let delta = wrap_angle(angle_delta);
    let mut best = 0.0;
    let mut best_err = f64::INFINITY;
    for &w in &[TURN_RATES[1], TURN_RATES[0], TURN_RATES[2]] {
        let err = (delta - w * dt).abs();
        if err < best_err {
            best_err = err;
            best = w;
        }
    }
    best
}

/// Acceleration notch closest to the desired value. Ties prefer the weaker
/// command.
pub fn nearest_accel(desired: f64) -> f64 {
    let mut best = 0.0;
    let mut best_err = f64::INFINITY;
    for &a in &[ACCELS[1], ACCELS[0], ACCELS[2]] {
        let err = (desired - a).abs();
        if err < best_err {
            best_err = err;
            best = a;
        }
    }
    best
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("checkpoint holds a {found} model, expected {expected}")]
    ModelKindMismatch {
        expected: &'static str,
        found: &'static str,
    },
}

/// Risk-threshold rule for the IQN planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskMode {
    /// Constant CVaR threshold in (0, 1].
    Fixed(f64),
    /// Threshold recomputed each step from the nearest LiDAR reflection.
    Adaptive,
}

/// Distributional RL planner with fixed or adaptive risk sensitivity.
pub struct IqnPlanner {
    model: Arc<MlpModel<f32>>,
    mode: RiskMode,
    k: usize,
    lidar: LidarConfig,
    rng: ChaCha20Rng,
    last_phi: f64,
}

impl IqnPlanner {
    pub fn new(
        model: Arc<MlpModel<f32>>,
        mode: RiskMode,
        k: usize,
        lidar: LidarConfig,
    ) -> Result<Self, PlannerError> {
        if model.kind != ModelKind::Iqn {
            return Err(PlannerError::ModelKindMismatch {
                expected: "iqn",
                found: model.kind.label(),
            });
        }
        if let RiskMode::Fixed(phi) = mode {
            assert!(phi > 0.0 && phi <= 1.0, "phi must lie in (0, 1]");
        }
        Ok(IqnPlanner {
            model,
            mode,
            k,
            lidar,
            rng: ChaCha20Rng::seed_from_u64(0),
            last_phi: 1.0,
        })
    }
}

impl Planner for IqnPlanner {
    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha20Rng::seed_from_u64(seed);
        self.last_phi = 1.0;
    }

    fn act(&mut self, obs: &Observation, _steering_speed: f64) -> Action {
        let phi = match self.mode {
            RiskMode::Fixed(phi) => phi,
            RiskMode::Adaptive => adaptive_phi(obs, self.lidar.max_range),
        };
        self.last_phi = phi;
        let features = obs.encode(&self.lidar);
        let model = &self.model;
        let index = select_action_iqn(
            |taus| model.quantile_values(&features, taus),
            phi,
            self.k,
            &mut self.rng,
        );
        Action::from_index(index)
    }

    fn last_phi(&self) -> f64 {
        self.last_phi
    }
}

/// Greedy planner over a trained DQN value model.
pub struct DqnPlanner {
    model: Arc<MlpModel<f32>>,
    lidar: LidarConfig,
}

impl DqnPlanner {
    pub fn new(model: Arc<MlpModel<f32>>, lidar: LidarConfig) -> Result<Self, PlannerError> {
        if model.kind != ModelKind::Dqn {
            return Err(PlannerError::ModelKindMismatch {
                expected: "dqn",
                found: model.kind.label(),
            });
        }
        Ok(DqnPlanner { model, lidar })
    }
}

impl Planner for DqnPlanner {
    fn begin_episode(&mut self, _seed: u64) {}

    fn act(&mut self, obs: &Observation, _steering_speed: f64) -> Action {
        let features = obs.encode(&self.lidar);
        Action::from_index(argmax_lowest(&self.model.q_values(&features)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Topology;

    #[test]
    fn nearest_turn_rate_picks_the_closest_heading_change() {
        // Candidates at dt = 0.5 are {-0.26, 0, 0.26}; +0.3 rad is closest
        // to the full positive turn.
        assert_eq!(nearest_turn_rate(0.3, 0.5), 0.52);
        assert_eq!(nearest_turn_rate(0.0, 0.5), 0.0);
        assert_eq!(nearest_turn_rate(-0.1, 0.5), 0.0);
        assert_eq!(nearest_turn_rate(-0.2, 0.5), -0.52);
    }

    #[test]
    fn nearest_accel_examples() {
        assert_eq!(nearest_accel(0.3), 0.4);
        assert_eq!(nearest_accel(-0.05), 0.0);
        assert_eq!(nearest_accel(-3.0), -0.4);
    }

    #[test]
    fn model_kind_mismatch_is_rejected() {
        let dqn = Arc::new(MlpModel::<f32>::new(ModelKind::Dqn, Topology::standard(5), 1));
        let iqn = Arc::new(MlpModel::<f32>::new(ModelKind::Iqn, Topology::standard(5), 1));
        let lidar = LidarConfig { beams: 5, ..LidarConfig::default() };
        assert!(IqnPlanner::new(dqn.clone(), RiskMode::Fixed(0.5), 8, lidar.clone()).is_err());
        assert!(DqnPlanner::new(iqn.clone(), lidar.clone()).is_err());
        assert!(IqnPlanner::new(iqn, RiskMode::Adaptive, 8, lidar.clone()).is_ok());
        assert!(DqnPlanner::new(dqn, lidar).is_ok());
    }
}
