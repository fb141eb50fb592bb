//! Run configuration in TOML. Only `[run]` is required; every other section
//! falls back to the defaults of the corresponding module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{ExpertConfig, NetworkConfig};
use crate::checkpoint::sha256_hex;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::gauntlet::EvalSetup;
use crate::noise::NoiseBounds;
use crate::ppo::PpoConfig;
use crate::schedules::{ScheduleKind, TrainingSetup};
use crate::wake::{FarmLayout, TurbineSpec, WakeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub schedule: ScheduleKind,
    pub n_iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub warm_start: bool,
    /// Default output directory for `train`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FarmConfig {
    pub turbine: TurbineSpec,
    /// Turbine positions (m, East-North). Defaults to an East-West pair.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
    /// Spacing of the default pair, in rotor diameters.
    pub spacing_diameters: f64,
}

impl Default for FarmConfig {
    fn default() -> Self {
        Self {
            turbine: TurbineSpec::default(),
            positions: None,
            spacing_diameters: 7.0,
        }
    }
}

impl FarmConfig {
    pub fn layout(&self) -> FarmLayout {
        match &self.positions {
            Some(p) => FarmLayout::uniform(p.clone(), self.turbine.clone()),
            None => FarmLayout::east_west_pair(self.turbine.clone(), self.spacing_diameters),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GauntletConfig {
    pub seed: u64,
}

impl Default for GauntletConfig {
    fn default() -> Self {
        Self { seed: 2024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub farm: FarmConfig,
    #[serde(default)]
    pub wake: WakeModel,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub noise: NoiseBounds,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub expert: ExpertConfig,
    #[serde(default)]
    pub gauntlet: GauntletConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run: RunSection {
                name: "default".into(),
                schedule: ScheduleKind::ArmsRace,
                n_iterations: 1,
                seed: 0,
                warm_start: false,
                output_dir: None,
            },
            farm: FarmConfig::default(),
            wake: WakeModel::default(),
            env: EnvConfig::default(),
            noise: NoiseBounds::default(),
            ppo: PpoConfig::default(),
            network: NetworkConfig::default(),
            expert: ExpertConfig::default(),
            gauntlet: GauntletConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.farm.turbine.validate().map_err(cfg)?;
        self.farm.layout().validate().map_err(cfg)?;
        self.env.validate().map_err(cfg)?;
        self.noise.validate().map_err(cfg)?;
        self.ppo.validate().map_err(cfg)?;
        self.expert.grid().map_err(cfg)?;
        if self.run.n_iterations == 0 {
            return Err(Error::Config("run.n_iterations must be at least 1".into()));
        }
        if self.network.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("network.hidden sizes must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order do not matter.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn eval_setup(&self) -> EvalSetup {
        EvalSetup {
            env: self.env.clone(),
            layout: self.farm.layout(),
            model: self.wake.clone(),
            noise: self.noise.clone(),
            expert: self.expert.clone(),
        }
    }

    pub fn training_setup(&self) -> TrainingSetup {
        TrainingSetup {
            world: self.eval_setup(),
            ppo: self.ppo.clone(),
            net: self.network.clone(),
            seed: self.run.seed,
            n_iterations: self.run.n_iterations,
            warm_start: self.run.warm_start,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[run]\nname = \"t\"\nschedule = \"arms_race\"\nn_iterations = 2\nseed = 5\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.ppo, PpoConfig::default());
        assert_eq!(c.noise, NoiseBounds::default());
        assert_eq!(c.farm.layout(), FarmLayout::default());
        assert_eq!(c.run.schedule, ScheduleKind::ArmsRace);
    }

    #[test]
    fn missing_field_is_named() {
        let err = RunConfig::from_toml("[run]\nname = \"t\"\nschedule = \"ssp\"\nn_iterations = 1\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}[ppo]\nlearning_rat = 0.1\n");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("learning_rat"), "{err}");
    }

    #[test]
    fn toml_round_trip_preserves_hash() {
        let text = format!("{MINIMAL}[ppo]\nsteps_per_iteration = 20000\n[noise.max_bias]\nspeed = 4.0\ndirection = 5.0\nyaw = 20.0\npower = 500000.0\n");
        let c = RunConfig::from_toml(&text).unwrap();
        assert_eq!(c.noise.max_bias.direction, 5.0);
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.hash(), RunConfig::from_toml(MINIMAL).unwrap().hash());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let text = format!("{MINIMAL}[ppo]\nbatch_size = 100\n");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
    }
}
