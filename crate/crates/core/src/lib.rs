//! Marine navigation simulator and local path planners.
//!
//! The world is a 50 m x 50 m patch of water stirred by Rankine vortices.
//! A point robot steers through it toward a goal while avoiding circular
//! obstacles it can only see through a forward LiDAR fan. Planners range
//! from classical reactive methods (artificial potential fields, a
//! boundary-following bug algorithm) to value-based RL agents (DQN and a
//! distributional IQN agent with CVaR risk sensitivity).

pub mod agent;
pub mod env;
pub mod eval;
pub mod nn;
pub mod planner;
pub mod render;
pub mod seed;
pub mod sensing;
pub mod vec2;

pub use env::{Action, Environment, Obstacle, Outcome, RobotState, SimConfig, Vortex};
pub use sensing::{LidarConfig, Observation};
pub use vec2::Vec2;
