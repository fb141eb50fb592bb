//! Episodic wind-farm environment.
//!
//! Two physical tracks run in lockstep from the same inflow: the agent track
//! follows the protagonist's yaw commands and the baseline track holds every
//! turbine at zero yaw offset. The reward compares their trailing mean farm
//! power. Observations are stacks of the current and previous sensor frames,
//! normalized to [-1, 1], in a true and a corrupted variant.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::apply_errors;
use crate::signals::{Frame, SignalKind, Signals};
use crate::wake::{FarmLayout, InflowCondition, WakeModel, WakeState, MAX_YAW_DEG};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Normalization {
    pub speed: [f64; 2],
    pub direction: [f64; 2],
    pub yaw: [f64; 2],
    pub power: [f64; 2],
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            speed: [0.0, 30.0],
            direction: [0.0, 360.0],
            yaw: [-45.0, 45.0],
            power: [0.0, 2.0e6],
        }
    }
}

impl Normalization {
    pub fn bounds(&self, kind: SignalKind) -> [f64; 2] {
        match kind {
            SignalKind::Speed => self.speed,
            SignalKind::Direction => self.direction,
            SignalKind::Yaw => self.yaw,
            SignalKind::Power => self.power,
        }
    }

    pub fn normalize(&self, value: f64, kind: SignalKind) -> f64 {
        let [lo, hi] = self.bounds(kind);
        (2.0 * (value - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }

    pub fn denormalize(&self, value: f64, kind: SignalKind) -> f64 {
        let [lo, hi] = self.bounds(kind);
        lo + (value + 1.0) * 0.5 * (hi - lo)
    }

    fn validate(&self) -> Result<()> {
        for k in SignalKind::ALL {
            let [lo, hi] = self.bounds(k);
            if !(hi > lo) {
                return Err(Error::InvalidInput(format!("normalization bounds for {} are empty", k.name())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// s
    pub physics_dt: f64,
    /// s, integer multiple of `physics_dt`
    pub control_dt: f64,
    /// s
    pub episode_duration: f64,
    /// Frames per observation (current plus previous).
    pub history_length: usize,
    pub speed_bounds: [f64; 2],
    pub direction_bounds: [f64; 2],
    pub normalization: Normalization,
    /// Protagonist yaw change per control step, degrees.
    pub max_yaw_delta_per_step: f64,
    /// Agent steps in the trailing power average.
    pub reward_window: usize,
    /// Append the normalized accumulated error ε/β_max to the adversary's observation.
    pub adversary_observes_error: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            physics_dt: 5.0,
            control_dt: 10.0,
            episode_duration: 2000.0,
            history_length: 11,
            speed_bounds: [6.0, 7.0],
            direction_bounds: [267.0, 273.0],
            normalization: Normalization::default(),
            max_yaw_delta_per_step: 3.0,
            reward_window: 10,
            adversary_observes_error: false,
        }
    }
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    if !(r >= 1.0) || (r - r.round()).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("{what} must be a positive integer multiple, got {r}")));
    }
    Ok(r.round() as usize)
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.physics_substeps()?;
        self.episode_steps()?;
        self.normalization.validate()?;
        if self.history_length == 0 || self.reward_window == 0 {
            return Err(Error::InvalidInput("history_length and reward_window must be positive".into()));
        }
        if !(self.speed_bounds[0] > 0.0 && self.speed_bounds[1] >= self.speed_bounds[0]) {
            return Err(Error::InvalidInput("speed_bounds must be positive and ordered".into()));
        }
        if !(self.direction_bounds[1] >= self.direction_bounds[0]) {
            return Err(Error::InvalidInput("direction_bounds must be ordered".into()));
        }
        if !(self.max_yaw_delta_per_step > 0.0) {
            return Err(Error::InvalidInput("max_yaw_delta_per_step must be positive".into()));
        }
        Ok(())
    }

    pub fn physics_substeps(&self) -> Result<usize> {
        integer_ratio(self.control_dt, self.physics_dt, "control_dt / physics_dt")
    }

    pub fn episode_steps(&self) -> Result<usize> {
        integer_ratio(self.episode_duration, self.control_dt, "episode_duration / control_dt")
    }

    pub fn observation_len(&self, n_turbines: usize) -> usize {
        self.history_length * n_turbines * 4
    }

    pub fn contains(&self, inflow: &InflowCondition) -> bool {
        let [s0, s1] = self.speed_bounds;
        let [d0, d1] = self.direction_bounds;
        (s0..=s1).contains(&inflow.speed) && (d0..=d1).contains(&inflow.direction)
    }

    pub fn sample_inflow<R: Rng + ?Sized>(&self, rng: &mut R) -> InflowCondition {
        let [s0, s1] = self.speed_bounds;
        let [d0, d1] = self.direction_bounds;
        let speed = if s1 > s0 { rng.random_range(s0..s1) } else { s0 };
        let direction = if d1 > d0 { rng.random_range(d0..d1) } else { d0 };
        InflowCondition::new(speed, direction)
    }
}

/// Flattened history stack, oldest frame first, then turbine, then channel
/// in the order speed, direction, yaw, power.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    values: Vec<f64>,
    n_turbines: usize,
    history_length: usize,
}

impl Observation {
    fn from_frames<'a>(frames: impl Iterator<Item = &'a Frame>, n_turbines: usize, norm: &Normalization) -> Self {
        let mut values = Vec::new();
        let mut history_length = 0;
        for f in frames {
            history_length += 1;
            for s in f {
                for k in SignalKind::ALL {
                    values.push(norm.normalize(s[k], k));
                }
            }
        }
        Self {
            values,
            n_turbines,
            history_length,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn history_length(&self) -> usize {
        self.history_length
    }

    pub fn n_turbines(&self) -> usize {
        self.n_turbines
    }

    /// Normalized values of frame `i` (0 = oldest).
    pub fn frame(&self, i: usize) -> &[f64] {
        let w = self.n_turbines * 4;
        &self.values[i * w..(i + 1) * w]
    }

    /// Newest frame mapped back to physical units.
    pub fn newest_physical(&self, norm: &Normalization) -> Frame {
        self.frame(self.history_length - 1)
            .chunks(4)
            .map(|c| {
                Signals::from_array([c[0], c[1], c[2], c[3]]).map(|k, v| norm.denormalize(v, k))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSample {
    pub reward: f64,
    /// W
    pub agent_mean_power: f64,
    /// W
    pub baseline_mean_power: f64,
}

impl RewardSample {
    pub fn from_means(agent_mean_power: f64, baseline_mean_power: f64) -> Self {
        Self {
            reward: agent_mean_power / baseline_mean_power - 1.0,
            agent_mean_power,
            baseline_mean_power,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub true_obs: Observation,
    pub sensed_obs: Observation,
    pub reward: RewardSample,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct ObservationPair {
    pub true_obs: Observation,
    pub sensed_obs: Observation,
}

struct EpisodeState {
    inflow: InflowCondition,
    agent: WakeState,
    baseline: WakeState,
    step: usize,
    agent_power: TrailingWindow,
    baseline_power: TrailingWindow,
    true_frames: VecDeque<Frame>,
    sensed_frames: VecDeque<Frame>,
    errors: Vec<Signals>,
    last_reward: Option<RewardSample>,
}

pub struct FarmEnv {
    config: EnvConfig,
    layout: FarmLayout,
    model: WakeModel,
    substeps: usize,
    episode_steps: usize,
    episode: Option<EpisodeState>,
}

impl FarmEnv {
    pub fn new(config: EnvConfig, layout: FarmLayout, model: WakeModel) -> Result<Self> {
        config.validate()?;
        layout.validate()?;
        let substeps = config.physics_substeps()?;
        let episode_steps = config.episode_steps()?;
        Ok(Self {
            config,
            layout,
            model,
            substeps,
            episode_steps,
            episode: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn layout(&self) -> &FarmLayout {
        &self.layout
    }

    pub fn model(&self) -> &WakeModel {
        &self.model
    }

    pub fn n_turbines(&self) -> usize {
        self.layout.len()
    }

    pub fn observation_len(&self) -> usize {
        self.config.observation_len(self.layout.len())
    }

    pub fn episode_steps(&self) -> usize {
        self.episode_steps
    }

    fn episode(&self) -> Result<&EpisodeState> {
        self.episode
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("environment used before reset".into()))
    }

    pub fn inflow(&self) -> Result<InflowCondition> {
        Ok(self.episode()?.inflow)
    }

    pub fn step_index(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.step)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.step >= self.episode_steps)
    }

    pub fn physical_yaw(&self) -> Result<&[f64]> {
        Ok(self.episode()?.agent.yaw())
    }

    pub fn baseline_yaw(&self) -> Result<&[f64]> {
        Ok(self.episode()?.baseline.yaw())
    }

    pub fn wake_state(&self) -> Result<&WakeState> {
        Ok(&self.episode()?.agent)
    }

    pub fn current_true_frame(&self) -> Result<&Frame> {
        Ok(self.episode()?.true_frames.back().expect("history is never empty"))
    }

    pub fn current_sensed_frame(&self) -> Result<&Frame> {
        Ok(self.episode()?.sensed_frames.back().expect("history is never empty"))
    }

    /// Errors applied to the newest sensed frame.
    pub fn current_errors(&self) -> Result<&[Signals]> {
        Ok(&self.episode()?.errors)
    }

    pub fn last_reward(&self) -> Option<RewardSample> {
        self.episode.as_ref().and_then(|e| e.last_reward)
    }

    pub fn true_observation(&self) -> Result<Observation> {
        let e = self.episode()?;
        Ok(Observation::from_frames(e.true_frames.iter(), self.layout.len(), &self.config.normalization))
    }

    pub fn sensed_observation(&self) -> Result<Observation> {
        let e = self.episode()?;
        Ok(Observation::from_frames(e.sensed_frames.iter(), self.layout.len(), &self.config.normalization))
    }

    fn measure(&self, state: &WakeState, inflow: &InflowCondition) -> Frame {
        let powers = state.powers(&self.layout);
        state
            .speeds()
            .iter()
            .zip(state.yaw())
            .zip(powers)
            .map(|((&u, &g), p)| Signals::new(u, inflow.direction, g, p))
            .collect()
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, inflow: Option<InflowCondition>, rng: &mut R) -> Result<ObservationPair> {
        let zeros = vec![Signals::ZERO; self.layout.len()];
        self.reset_with_errors(inflow, &zeros, rng)
    }

    /// Starts an episode; `initial_errors` corrupt the initial frame (zero for
    /// the adversary, η + β for procedural noise).
    pub fn reset_with_errors<R: Rng + ?Sized>(
        &mut self,
        inflow: Option<InflowCondition>,
        initial_errors: &[Signals],
        rng: &mut R,
    ) -> Result<ObservationPair> {
        let inflow = match inflow {
            Some(i) if !self.config.contains(&i) => {
                return Err(Error::InvalidInput(format!(
                    "inflow ({}, {}) outside configured bounds",
                    i.speed, i.direction
                )));
            }
            Some(i) => i,
            None => self.config.sample_inflow(rng),
        };
        if initial_errors.len() != self.layout.len() {
            return Err(Error::InvalidInput("one error entry per turbine required".into()));
        }
        let min_speed = self.config.speed_bounds[0];
        let agent = WakeState::new(&self.layout, &self.model, &inflow, min_speed, self.config.physics_dt)?;
        let baseline = agent.clone();
        let frame = self.measure(&agent, &inflow);
        let sensed = apply_errors(&frame, initial_errors);
        let h = self.config.history_length;
        self.episode = Some(EpisodeState {
            inflow,
            agent,
            baseline,
            step: 0,
            agent_power: TrailingWindow::new(self.config.reward_window),
            baseline_power: TrailingWindow::new(self.config.reward_window),
            true_frames: std::iter::repeat_n(frame, h).collect(),
            sensed_frames: std::iter::repeat_n(sensed, h).collect(),
            errors: initial_errors.to_vec(),
            last_reward: None,
        });
        Ok(ObservationPair {
            true_obs: self.true_observation()?,
            sensed_obs: self.sensed_observation()?,
        })
    }

    /// One control step. `yaw_delta` is in degrees per turbine (clamped to the
    /// configured rate); `errors` is the additive sensor error active for the
    /// frame produced by this step.
    pub fn step(&mut self, yaw_delta: &[f64], errors: &[Signals]) -> Result<StepOutcome> {
        let n = self.layout.len();
        if yaw_delta.len() != n || errors.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} yaw deltas and error entries, got {} and {}",
                yaw_delta.len(),
                errors.len()
            )));
        }
        if self.is_done() {
            return Err(if self.episode.is_none() {
                Error::InvalidInput("environment used before reset".into())
            } else {
                Error::EpisodeFinished
            });
        }
        let max_delta = self.config.max_yaw_delta_per_step;
        let dt = self.config.physics_dt;
        let substeps = self.substeps;
        let ep = self.episode.as_mut().expect("checked above");
        let commanded: Vec<f64> = ep
            .agent
            .yaw()
            .iter()
            .zip(yaw_delta)
            .map(|(&g, &d)| (g + d.clamp(-max_delta, max_delta)).clamp(-MAX_YAW_DEG, MAX_YAW_DEG))
            .collect();
        let zero = vec![0.0; n];
        let mut agent_sum = 0.0;
        let mut baseline_sum = 0.0;
        for _ in 0..substeps {
            ep.agent.step_physics(&self.layout, &self.model, &ep.inflow, &commanded, dt)?;
            ep.baseline.step_physics(&self.layout, &self.model, &ep.inflow, &zero, dt)?;
            agent_sum += ep.agent.powers(&self.layout).iter().sum::<f64>();
            baseline_sum += ep.baseline.powers(&self.layout).iter().sum::<f64>();
        }
        ep.agent_power.push(agent_sum / substeps as f64);
        ep.baseline_power.push(baseline_sum / substeps as f64);
        let agent_mean = ep.agent_power.mean();
        let baseline_mean = ep.baseline_power.mean();
        if !(baseline_mean > 0.0) {
            return Err(Error::Internal("baseline farm power is not positive".into()));
        }
        let reward = RewardSample::from_means(agent_mean, baseline_mean);
        ep.last_reward = Some(reward);

        let powers = ep.agent.powers(&self.layout);
        let frame: Frame = ep
            .agent
            .speeds()
            .iter()
            .zip(ep.agent.yaw())
            .zip(powers)
            .map(|((&u, &g), p)| Signals::new(u, ep.inflow.direction, g, p))
            .collect();
        let sensed = apply_errors(&frame, errors);
        ep.true_frames.pop_front();
        ep.true_frames.push_back(frame);
        ep.sensed_frames.pop_front();
        ep.sensed_frames.push_back(sensed);
        ep.errors = errors.to_vec();
        ep.step += 1;
        let done = ep.step >= self.episode_steps;
        Ok(StepOutcome {
            true_obs: self.true_observation()?,
            sensed_obs: self.sensed_observation()?,
            reward,
            done,
        })
    }
}

/// Mean over the most recent `cap` values (fewer while warming up).
#[derive(Debug, Clone)]
struct TrailingWindow {
    values: VecDeque<f64>,
    cap: usize,
}

impl TrailingWindow {
    fn new(cap: usize) -> Self {
        Self {
            values: VecDeque::with_capacity(cap),
            cap,
        }
    }

    fn push(&mut self, v: f64) {
        if self.values.len() == self.cap {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    #[cfg(test)]
    fn len(&self) -> usize {
        self.values.len()
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}
