//! Run configuration: one TOML document with a section per subsystem.
//! Every field has a default; unknown keys are rejected. Command-line flags
//! override whatever the document says.

use anyhow::{Context, Result};
use marinenav::agent::TrainConfig;
use marinenav::env::SimConfig;
use marinenav::planner::{ApfParams, BugParams};
use marinenav::sensing::LidarConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Test case: 1 (4 vortices, 6 obstacles) or 2 (8 vortices, 10 obstacles).
    pub case: u8,
    pub episodes: usize,
    /// Control period during evaluation, seconds.
    pub dt: f64,
    /// Number of leading episodes whose step-by-step trajectories and
    /// environment snapshots are written out.
    pub trajectories: usize,
    /// Quantile samples per IQN decision.
    pub k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            case: 1,
            episodes: 500,
            dt: 0.5,
            trajectories: 0,
            k: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub lidar: LidarConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub apf: ApfParams,
    pub bug: BugParams,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        anyhow::ensure!(self.sim.map_size > 0.0, "sim.map_size must be positive");
        anyhow::ensure!(self.sim.v_max > 0.0, "sim.v_max must be positive");
        anyhow::ensure!(self.sim.substeps > 0, "sim.substeps must be positive");
        anyhow::ensure!(self.lidar.beams > 0, "lidar.beams must be positive");
        anyhow::ensure!(self.lidar.max_range > 0.0, "lidar.max_range must be positive");
        anyhow::ensure!(
            self.eval.case == 1 || self.eval.case == 2,
            "eval.case must be 1 or 2"
        );
        anyhow::ensure!(self.eval.episodes >= 1, "eval.episodes must be at least 1");
        anyhow::ensure!(self.eval.dt > 0.0, "eval.dt must be positive");
        anyhow::ensure!(self.eval.k >= 1, "eval.k must be at least 1");
        anyhow::ensure!(self.train.batch_size >= 1, "train.batch_size must be at least 1");
        anyhow::ensure!(self.train.control_dt > 0.0, "train.control_dt must be positive");
        anyhow::ensure!(
            self.train.n_online >= 1 && self.train.n_target >= 1 && self.train.k_action >= 1,
            "train quantile sample counts must be at least 1"
        );
        anyhow::ensure!(
            self.train.phi_train > 0.0 && self.train.phi_train <= 1.0,
            "train.phi_train must lie in (0, 1]"
        );
        anyhow::ensure!(self.train.kappa > 0.0, "train.kappa must be positive");
        anyhow::ensure!(
            self.train.phase_boundaries[0] <= self.train.phase_boundaries[1],
            "train.phase_boundaries must be non-decreasing"
        );
        anyhow::ensure!(self.bug.standoff < self.lidar.max_range,
            "bug.standoff must stay below lidar.max_range");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "seed = 1\n[sim]\nwarp_factor = 9\n";
        let parsed: Result<RunConfig, _> = toml::from_str(text);
        assert!(parsed.is_err());
    }

    #[test]
    fn sections_override_defaults() {
        let text = "seed = 9\n[eval]\ncase = 2\nepisodes = 10\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.eval.case, 2);
        assert_eq!(cfg.eval.episodes, 10);
        assert_eq!(cfg.eval.dt, 0.5);
        assert_eq!(cfg.sim.v_max, 2.0);
    }
}
