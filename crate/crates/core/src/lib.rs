//! Adversarial co-training of wind-farm yaw controllers and sensor-error agents.
//!
//! A protagonist steers turbine yaw offsets to deflect wakes; an adversary
//! injects bounded, time-correlated errors into the telemetry the protagonist
//! sees. The crate provides the wake simulator, the environment, PPO training,
//! three co-training schedules (arms race, synthetic self-play, self-play) and
//! a gauntlet that evaluates every protagonist against every adversary.

pub mod agents;
pub mod artifact;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod gauntlet;
pub mod nn;
pub mod noise;
pub mod ppo;
pub mod schedules;
pub mod seed;
pub mod signals;
pub mod wake;

pub use error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
