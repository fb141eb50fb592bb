//! Policy checkpoints: versioned JSON, bit-exact on reload, written once.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{AgentRole, PolicyAgent};
use crate::error::{Error, Result};
use crate::nn::{GaussianHead, Mlp};

pub const FORMAT: &str = "yawguard-policy";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMetadata {
    pub role: AgentRole,
    pub schedule: String,
    pub iteration: usize,
    pub seed: u64,
    pub total_env_steps: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpRecord {
    pub layer_sizes: Vec<usize>,
    /// One row-major (out × in) array per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpRecord {
    pub fn from_mlp(m: &Mlp) -> Self {
        Self {
            layer_sizes: m.layer_sizes().to_vec(),
            weights: m.weights().iter().map(|w| w.iter().copied().collect()).collect(),
            biases: m.biases().iter().map(|b| b.to_vec()).collect(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        let s = &self.layer_sizes;
        if s.len() < 2 || self.weights.len() != s.len() - 1 || self.biases.len() != s.len() - 1 {
            return Err(Error::InvalidInput("layer count does not match layer_sizes".into()));
        }
        let mut weights = Vec::new();
        for (l, w) in self.weights.iter().enumerate() {
            let a = Array2::from_shape_vec((s[l + 1], s[l]), w.clone())
                .map_err(|_| Error::InvalidInput(format!("layer {l} weight has {} values", w.len())))?;
            weights.push(a);
        }
        let biases = self.biases.iter().map(|b| Array1::from_vec(b.clone())).collect();
        Mlp::from_parts(s.clone(), weights, biases)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub metadata: CheckpointMetadata,
    pub actor: MlpRecord,
    pub log_std: Vec<f64>,
    pub critic: MlpRecord,
    pub action_scale: Vec<f64>,
}

impl Checkpoint {
    pub fn from_agent(agent: &PolicyAgent, metadata: CheckpointMetadata) -> Self {
        Self {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            metadata,
            actor: MlpRecord::from_mlp(&agent.actor),
            log_std: agent.head.log_std.to_vec(),
            critic: MlpRecord::from_mlp(&agent.critic),
            action_scale: agent.action_scale.clone(),
        }
    }

    pub fn to_agent(&self) -> Result<PolicyAgent> {
        let agent = PolicyAgent {
            role: self.metadata.role,
            actor: self.actor.to_mlp()?,
            head: GaussianHead {
                log_std: Array1::from_vec(self.log_std.clone()),
            },
            critic: self.critic.to_mlp()?,
            action_scale: self.action_scale.clone(),
        };
        agent.validate()?;
        Ok(agent)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.format != FORMAT {
            return Err(Error::InvalidInput(format!("not a policy checkpoint (format {:?})", c.format)));
        }
        if c.version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(c)
    }

    /// Writes to a new file; an existing file is never replaced.
    pub fn save(&self, path: &Path) -> Result<String> {
        let text = self.to_json()?;
        let mut f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

pub fn load_agent(path: &Path) -> Result<(PolicyAgent, CheckpointMetadata)> {
    let c = Checkpoint::load(path)?;
    let agent = c.to_agent().map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok((agent, c.metadata))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}
