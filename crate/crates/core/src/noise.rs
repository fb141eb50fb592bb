//! Sensor corruption: procedural noise and the adversary's bounded error state.
//!
//! Both sources produce an additive error per turbine and channel. The error
//! is applied to the physical signals before normalization, and a wind
//! direction error also shows up on the yaw sensor with the opposite sign
//! (yaw is measured relative to the sensed direction).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{Frame, SignalKind, Signals};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseBounds {
    /// Largest allowed bias per channel (power in W).
    pub max_bias: Signals,
    /// Standard deviation of the instantaneous procedural noise.
    pub white_noise: Signals,
}

impl Default for NoiseBounds {
    fn default() -> Self {
        Self {
            max_bias: Signals::new(4.0, 10.0, 20.0, 0.5e6),
            white_noise: Signals::new(0.5, 2.0, 0.0, 0.0),
        }
    }
}

impl NoiseBounds {
    /// Noise-free bounds: corruption is the identity.
    pub fn none() -> Self {
        Self {
            max_bias: Signals::ZERO,
            white_noise: Signals::ZERO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for k in SignalKind::ALL {
            if !(self.max_bias[k] >= 0.0 && self.white_noise[k] >= 0.0) {
                return Err(Error::InvalidInput(format!("noise bounds for {} must be non-negative", k.name())));
            }
        }
        Ok(())
    }

    /// Largest change the adversary may make to one channel in one agent step.
    pub fn step_limit(&self, k: SignalKind) -> f64 {
        self.max_bias[k] / 10.0
    }
}

/// x̂ = x + ε per channel, plus the yaw–direction coupling γ̂ = γ + ε_γ − ε_θ.
pub fn apply_errors(frame: &[Signals], errors: &[Signals]) -> Frame {
    frame
        .iter()
        .zip(errors)
        .map(|(x, e)| Signals {
            speed: x.speed + e.speed,
            direction: x.direction + e.direction,
            yaw: x.yaw + e.yaw - e.direction,
            power: x.power + e.power,
        })
        .collect()
}

/// Episode-constant bias of the procedural noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProceduralNoiseState {
    bias: Vec<Signals>,
}

impl ProceduralNoiseState {
    /// Draws a fresh bias β ~ U[-β_max, β_max] per turbine and channel.
    pub fn reset<R: Rng + ?Sized>(bounds: &NoiseBounds, n_turbines: usize, rng: &mut R) -> Self {
        let bias = (0..n_turbines)
            .map(|_| {
                bounds.max_bias.map(|_, b| if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 })
            })
            .collect();
        Self { bias }
    }

    pub fn bias(&self) -> &[Signals] {
        &self.bias
    }

    /// η + β with a fresh η ~ N(0, σ) on every call.
    pub fn sample_errors<R: Rng + ?Sized>(&self, bounds: &NoiseBounds, rng: &mut R) -> Vec<Signals> {
        self.bias
            .iter()
            .map(|b| {
                b.map(|k, beta| {
                    let sigma = bounds.white_noise[k];
                    let eta = if sigma > 0.0 { sigma * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
                    beta + eta
                })
            })
            .collect()
    }
}

pub fn procedural_corrupt<R: Rng + ?Sized>(
    frame: &[Signals],
    state: &ProceduralNoiseState,
    bounds: &NoiseBounds,
    rng: &mut R,
) -> Frame {
    apply_errors(frame, &state.sample_errors(bounds, rng))
}

/// Requested error increments, physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryAction {
    pub requests: Vec<Signals>,
}

impl AdversaryAction {
    /// Scales a network output laid out turbine-major, channel-minor
    /// (`[u₀, θ₀, γ₀, P₀, u₁, …]`) by each channel's step limit.
    pub fn from_normalized(output: &[f64], bounds: &NoiseBounds) -> Result<Self> {
        if output.len() % 4 != 0 {
            return Err(Error::InvalidInput(format!(
                "adversary output length {} is not a multiple of 4",
                output.len()
            )));
        }
        let requests = output
            .chunks(4)
            .map(|c| Signals::from_array([c[0], c[1], c[2], c[3]]).map(|k, v| v * bounds.step_limit(k)))
            .collect();
        Ok(Self { requests })
    }

    pub fn zero(n_turbines: usize) -> Self {
        Self {
            requests: vec![Signals::ZERO; n_turbines],
        }
    }
}

/// Accumulated adversarial error ε, starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorErrorState {
    eps: Vec<Signals>,
}

impl SensorErrorState {
    pub fn zero(n_turbines: usize) -> Self {
        Self {
            eps: vec![Signals::ZERO; n_turbines],
        }
    }

    pub fn errors(&self) -> &[Signals] {
        &self.eps
    }

    /// Δ = clamp(request, ±β_max/10), then ε ← clamp(ε + Δ, ±β_max).
    pub fn apply_delta(&mut self, action: &AdversaryAction, bounds: &NoiseBounds) -> Result<()> {
        if action.requests.len() != self.eps.len() {
            return Err(Error::InvalidInput(format!(
                "adversary action covers {} turbines, state has {}",
                action.requests.len(),
                self.eps.len()
            )));
        }
        for (e, r) in self.eps.iter_mut().zip(&action.requests) {
            for k in SignalKind::ALL {
                let lim = bounds.step_limit(k);
                let max = bounds.max_bias[k];
                let delta = r[k].clamp(-lim, lim);
                e[k] = (e[k] + delta).clamp(-max, max);
            }
        }
        Ok(())
    }
}
