//! Protagonists, adversaries and the non-learning reference agents.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{FarmEnv, Normalization, Observation};
use crate::error::{Error, Result};
use crate::nn::{sample_action, GaussianHead, Mlp};
use crate::noise::{AdversaryAction, NoiseBounds, ProceduralNoiseState, SensorErrorState};
use crate::signals::{Frame, SignalKind, Signals};
use crate::wake::{steady_farm_power, FarmLayout, InflowCondition, WakeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Protagonist,
    Adversary,
    Expert,
    Baseline,
    Procedural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub initial_log_std: f64,
    pub hidden_gain: f64,
    pub actor_output_gain: f64,
    pub critic_output_gain: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            initial_log_std: 0.0,
            hidden_gain: 1.0,
            actor_output_gain: 0.01,
            critic_output_gain: 1.0,
        }
    }
}

/// Raw policy output for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    /// Unclipped Gaussian sample (or the mean in deterministic mode).
    pub raw: Vec<f64>,
    pub log_prob: f64,
}

/// Gaussian actor plus separate critic.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAgent {
    pub role: AgentRole,
    pub actor: Mlp,
    pub head: GaussianHead,
    pub critic: Mlp,
    /// Physical magnitude of a ±1 action per output dimension.
    pub action_scale: Vec<f64>,
}

impl PolicyAgent {
    pub fn new<R: Rng + ?Sized>(
        role: AgentRole,
        obs_dim: usize,
        action_scale: Vec<f64>,
        net: &NetworkConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let action_dim = action_scale.len();
        let sizes = |out: usize| {
            let mut s = vec![obs_dim];
            s.extend(&net.hidden);
            s.push(out);
            s
        };
        let actor = Mlp::orthogonal(&sizes(action_dim), net.hidden_gain, net.actor_output_gain, rng)?;
        let critic = Mlp::orthogonal(&sizes(1), net.hidden_gain, net.critic_output_gain, rng)?;
        let agent = Self {
            role,
            actor,
            head: GaussianHead::new(action_dim, net.initial_log_std),
            critic,
            action_scale,
        };
        agent.validate()?;
        Ok(agent)
    }

    /// Protagonist for `env`: one output per turbine, ±max yaw delta.
    pub fn protagonist<R: Rng + ?Sized>(env: &FarmEnv, net: &NetworkConfig, rng: &mut R) -> Result<Self> {
        let scale = vec![env.config().max_yaw_delta_per_step; env.n_turbines()];
        Self::new(AgentRole::Protagonist, env.observation_len(), scale, net, rng)
    }

    /// Adversary for `env`: four outputs per turbine, each ±β_max/10.
    pub fn adversary<R: Rng + ?Sized>(
        env: &FarmEnv,
        bounds: &NoiseBounds,
        net: &NetworkConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let scale: Vec<f64> = (0..env.n_turbines())
            .flat_map(|_| SignalKind::ALL.map(|k| bounds.step_limit(k)))
            .collect();
        let mut obs_dim = env.observation_len();
        if env.config().adversary_observes_error {
            obs_dim += env.n_turbines() * 4;
        }
        Self::new(AgentRole::Adversary, obs_dim, scale, net, rng)
    }

    pub fn validate(&self) -> Result<()> {
        if self.actor.input_dim() != self.critic.input_dim() {
            return Err(Error::InvalidInput("actor and critic disagree on observation size".into()));
        }
        if self.critic.output_dim() != 1 {
            return Err(Error::InvalidInput("critic must have a single output".into()));
        }
        if self.actor.output_dim() != self.head.action_dim() || self.action_scale.len() != self.head.action_dim() {
            return Err(Error::InvalidInput("actor output, log_std and action scale sizes differ".into()));
        }
        if self.head.log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("log_std must be finite".into()));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.head.action_dim()
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(obs)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?[0])
    }

    /// Samples from the policy, or returns its mean when `deterministic`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, deterministic: bool) -> Result<PolicyStep> {
        let mean = self.mean_action(obs)?;
        if deterministic {
            let log_prob = self.head.log_prob(&mean, &mean);
            return Ok(PolicyStep { raw: mean, log_prob });
        }
        let (raw, log_prob) = sample_action(&mean, &self.head, rng)?;
        Ok(PolicyStep { raw, log_prob })
    }

    /// Clips a raw action to [-1, 1] and scales it to physical units.
    pub fn scale_action(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.action_scale)
            .map(|(&a, &s)| a.clamp(-1.0, 1.0) * s)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.actor.param_count() + self.head.log_std.len() + self.critic.param_count()
    }

    /// Actor, then log_std, then critic.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.actor.write_flat(&mut out);
        out.extend(self.head.log_std.iter());
        self.critic.write_flat(&mut out);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut i = self.actor.read_flat(flat);
        for v in self.head.log_std.iter_mut() {
            *v = flat[i];
            i += 1;
        }
        self.critic.read_flat(&flat[i..]);
    }
}

/// Yaw-rate scaled policy action for a protagonist observation.
pub fn protagonist_act<R: Rng + ?Sized>(
    agent: &PolicyAgent,
    sensed_obs: &Observation,
    rng: &mut R,
    deterministic: bool,
) -> Result<Vec<f64>> {
    let step = agent.act(sensed_obs.as_slice(), rng, deterministic)?;
    Ok(agent.scale_action(&step.raw))
}

/// Adversary input: the true observation, optionally followed by ε/β_max.
pub fn adversary_input(true_obs: &Observation, errors: &[Signals], bounds: &NoiseBounds, include_errors: bool) -> Vec<f64> {
    let mut v = true_obs.as_slice().to_vec();
    if include_errors {
        for e in errors {
            for k in SignalKind::ALL {
                let m = bounds.max_bias[k];
                v.push(if m > 0.0 { e[k] / m } else { 0.0 });
            }
        }
    }
    v
}

pub fn adversary_act<R: Rng + ?Sized>(
    agent: &PolicyAgent,
    input: &[f64],
    bounds: &NoiseBounds,
    rng: &mut R,
    deterministic: bool,
) -> Result<AdversaryAction> {
    let step = agent.act(input, rng, deterministic)?;
    adversary_action_from_raw(&step.raw, bounds)
}

pub fn adversary_action_from_raw(raw: &[f64], bounds: &NoiseBounds) -> Result<AdversaryAction> {
    let clipped: Vec<f64> = raw.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
    AdversaryAction::from_normalized(&clipped, bounds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    pub yaw_min: f64,
    pub yaw_max: f64,
    pub yaw_step: f64,
    /// Turbines the expert may yaw. Defaults to every turbine with another
    /// rotor in its wake at `nominal_direction`.
    pub steerable: Option<Vec<usize>>,
    pub nominal_direction: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            yaw_min: -30.0,
            yaw_max: 30.0,
            yaw_step: 1.0,
            steerable: None,
            nominal_direction: 270.0,
        }
    }
}

impl ExpertConfig {
    /// Candidate offsets ordered by |γ|, negative before positive. Always contains 0.
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.yaw_step > 0.0) || self.yaw_min > 0.0 || self.yaw_max < 0.0 {
            return Err(Error::InvalidInput("expert grid must have a positive step and bracket 0°".into()));
        }
        let mut grid = vec![0.0];
        let mut k = 1.0;
        loop {
            let g = k * self.yaw_step;
            let neg = -g >= self.yaw_min - 1e-9;
            let pos = g <= self.yaw_max + 1e-9;
            if !neg && !pos {
                break;
            }
            if neg {
                grid.push(-g);
            }
            if pos {
                grid.push(g);
            }
            k += 1.0;
        }
        Ok(grid)
    }

    pub fn steerable_turbines(&self, layout: &FarmLayout) -> Vec<usize> {
        if let Some(s) = &self.steerable {
            return s.clone();
        }
        let inflow = InflowCondition::new(1.0, self.nominal_direction);
        (0..layout.len())
            .filter(|&i| {
                let d = layout.turbines[i].rotor_diameter;
                (0..layout.len()).any(|j| {
                    let (x, y) = inflow.project(layout.positions[i], layout.positions[j]);
                    j != i && x > 0.0 && y.abs() < 2.0 * d
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YawSolution {
    pub offsets: Vec<f64>,
    /// W
    pub farm_power: f64,
    /// W at zero yaw
    pub baseline_power: f64,
}

impl YawSolution {
    pub fn gain(&self) -> f64 {
        self.farm_power / self.baseline_power - 1.0
    }
}

fn better(candidate: f64, best: f64) -> bool {
    candidate > best * (1.0 + 1e-12)
}

/// Steady-state yaw optimization by exhaustive search over `grid` for each
/// steerable turbine (coordinate sweeps when more than one is steerable).
/// Non-steerable turbines stay at 0°. `grid` must be ordered by preference
/// (see [`ExpertConfig::grid`]): ties keep the earlier candidate.
pub fn grid_search_yaw(
    inflow: &InflowCondition,
    layout: &FarmLayout,
    model: &WakeModel,
    grid: &[f64],
    steerable: &[usize],
) -> Result<YawSolution> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("yaw search grid is empty".into()));
    }
    let mut offsets = vec![0.0; layout.len()];
    let baseline_power = steady_farm_power(layout, model, inflow, &offsets)?;
    let mut best_power = baseline_power;
    let sweeps = if steerable.len() > 1 { 3 } else { 1 };
    for _ in 0..sweeps {
        for &i in steerable {
            let mut trial = offsets.clone();
            trial[i] = grid[0];
            let mut best_g = grid[0];
            best_power = steady_farm_power(layout, model, inflow, &trial)?;
            for &g in &grid[1..] {
                trial[i] = g;
                let p = steady_farm_power(layout, model, inflow, &trial)?;
                if better(p, best_power) {
                    best_power = p;
                    best_g = g;
                }
            }
            offsets[i] = best_g;
        }
    }
    Ok(YawSolution {
        offsets,
        farm_power: best_power,
        baseline_power,
    })
}

/// Model-based controller confounded only through its inflow estimate: it
/// optimizes at the sensed inflow, but its offsets are realized relative to
/// the true wind direction.
#[derive(Debug, Clone)]
pub struct ExpertAgent {
    layout: FarmLayout,
    model: WakeModel,
    normalization: Normalization,
    grid: Vec<f64>,
    steerable: Vec<usize>,
    max_delta: f64,
}

impl ExpertAgent {
    pub fn new(config: &ExpertConfig, env: &FarmEnv) -> Result<Self> {
        let layout = env.layout().clone();
        let steerable = config.steerable_turbines(&layout);
        if steerable.iter().any(|&i| i >= layout.len()) {
            return Err(Error::InvalidInput("steerable turbine index out of range".into()));
        }
        Ok(Self {
            grid: config.grid()?,
            steerable,
            model: env.model().clone(),
            normalization: env.config().normalization.clone(),
            max_delta: env.config().max_yaw_delta_per_step,
            layout,
        })
    }

    pub fn steerable(&self) -> &[usize] {
        &self.steerable
    }

    /// Farm-mean sensed speed and direction of one frame.
    pub fn sensed_inflow(frame: &Frame) -> InflowCondition {
        let n = frame.len() as f64;
        let speed = frame.iter().map(|s| s.speed).sum::<f64>() / n;
        let direction = frame.iter().map(|s| s.direction).sum::<f64>() / n;
        InflowCondition::new(speed.max(0.1), direction)
    }

    pub fn target_offsets(&self, sensed_frame: &Frame) -> Result<Vec<f64>> {
        let inflow = Self::sensed_inflow(sensed_frame);
        Ok(grid_search_yaw(&inflow, &self.layout, &self.model, &self.grid, &self.steerable)?.offsets)
    }

    /// Yaw deltas moving the physical offsets toward the target at the allowed rate.
    pub fn act(&self, sensed_obs: &Observation, physical_yaw: &[f64]) -> Result<Vec<f64>> {
        let frame = sensed_obs.newest_physical(&self.normalization);
        let target = self.target_offsets(&frame)?;
        Ok(target
            .iter()
            .zip(physical_yaw)
            .map(|(&t, &g)| (t - g).clamp(-self.max_delta, self.max_delta))
            .collect())
    }
}

/// Anything that can sit in the protagonist seat.
#[derive(Debug, Clone)]
pub enum Protagonist {
    Policy(PolicyAgent),
    Expert(ExpertAgent),
    Baseline,
}

impl Protagonist {
    pub fn role(&self) -> AgentRole {
        match self {
            Protagonist::Policy(_) => AgentRole::Protagonist,
            Protagonist::Expert(_) => AgentRole::Expert,
            Protagonist::Baseline => AgentRole::Baseline,
        }
    }

    /// Yaw deltas (degrees) for the current sensed observation.
    pub fn act<R: Rng + ?Sized>(
        &self,
        sensed_obs: &Observation,
        physical_yaw: &[f64],
        rng: &mut R,
        deterministic: bool,
    ) -> Result<Vec<f64>> {
        match self {
            Protagonist::Policy(p) => protagonist_act(p, sensed_obs, rng, deterministic),
            Protagonist::Expert(e) => e.act(sensed_obs, physical_yaw),
            Protagonist::Baseline => Ok(vec![0.0; physical_yaw.len()]),
        }
    }
}

/// Anything that can sit in the adversary seat.
#[derive(Debug, Clone)]
pub enum Opponent {
    Clean,
    Procedural,
    Adversary(PolicyAgent),
    /// Constant error on every step, initial frame included.
    Fixed(Vec<Signals>),
}

impl Opponent {
    pub fn role(&self) -> Option<AgentRole> {
        match self {
            Opponent::Clean => None,
            Opponent::Procedural => Some(AgentRole::Procedural),
            Opponent::Adversary(_) => Some(AgentRole::Adversary),
            Opponent::Fixed(_) => None,
        }
    }
}

/// Per-episode state of an opponent.
#[derive(Debug, Clone)]
pub enum OpponentState {
    Clean(usize),
    Procedural(ProceduralNoiseState),
    Adversary(SensorErrorState),
    Fixed(Vec<Signals>),
}

impl OpponentState {
    pub fn start<R: Rng + ?Sized>(opponent: &Opponent, bounds: &NoiseBounds, n_turbines: usize, rng: &mut R) -> Self {
        match opponent {
            Opponent::Clean => OpponentState::Clean(n_turbines),
            Opponent::Procedural => OpponentState::Procedural(ProceduralNoiseState::reset(bounds, n_turbines, rng)),
            Opponent::Adversary(_) => OpponentState::Adversary(SensorErrorState::zero(n_turbines)),
            Opponent::Fixed(e) => OpponentState::Fixed(e.clone()),
        }
    }

    /// Errors applied to the initial frame of an episode.
    pub fn initial_errors<R: Rng + ?Sized>(&self, bounds: &NoiseBounds, rng: &mut R) -> Vec<Signals> {
        match self {
            OpponentState::Clean(n) => vec![Signals::ZERO; *n],
            OpponentState::Procedural(st) => st.sample_errors(bounds, rng),
            OpponentState::Adversary(st) => st.errors().to_vec(),
            OpponentState::Fixed(e) => e.clone(),
        }
    }

    /// Errors for the frame produced by the next environment step. The
    /// adversary decides from the current true observation.
    pub fn next_errors<R: Rng + ?Sized>(
        &mut self,
        opponent: &Opponent,
        true_obs: &Observation,
        bounds: &NoiseBounds,
        include_errors: bool,
        rng: &mut R,
        deterministic: bool,
    ) -> Result<Vec<Signals>> {
        match (self, opponent) {
            (OpponentState::Clean(n), _) => Ok(vec![Signals::ZERO; *n]),
            (OpponentState::Procedural(st), _) => Ok(st.sample_errors(bounds, rng)),
            (OpponentState::Fixed(e), _) => Ok(e.clone()),
            (OpponentState::Adversary(st), Opponent::Adversary(agent)) => {
                let input = adversary_input(true_obs, st.errors(), bounds, include_errors);
                let action = adversary_act(agent, &input, bounds, rng, deterministic)?;
                st.apply_delta(&action, bounds)?;
                Ok(st.errors().to_vec())
            }
            _ => Err(Error::Internal("opponent state does not match opponent".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::seed;

    fn env() -> FarmEnv {
        FarmEnv::new(EnvConfig::default(), FarmLayout::default(), WakeModel::default()).unwrap()
    }

    #[test]
    fn shapes_match_the_default_farm() {
        let e = env();
        let mut rng = seed::stream(1, &[]);
        let p = PolicyAgent::protagonist(&e, &NetworkConfig::default(), &mut rng).unwrap();
        let a = PolicyAgent::adversary(&e, &NoiseBounds::default(), &NetworkConfig::default(), &mut rng).unwrap();
        assert_eq!(p.obs_dim(), 88);
        assert_eq!(a.obs_dim(), 88);
        assert_eq!(p.action_dim(), 2);
        assert_eq!(a.action_dim(), 8);
        assert_eq!(p.critic.output_dim(), 1);
    }

    #[test]
    fn small_output_gain_gives_near_zero_actions() {
        let mut e = env();
        let mut rng = seed::stream(2, &[]);
        let p = PolicyAgent::protagonist(&e, &NetworkConfig::default(), &mut rng).unwrap();
        let obs = e.reset(None, &mut rng).unwrap();
        let d = protagonist_act(&p, &obs.sensed_obs, &mut rng, true).unwrap();
        assert!(d.iter().all(|v| v.abs() < 0.5), "{d:?}");
        let again = protagonist_act(&p, &obs.sensed_obs, &mut rng, true).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn action_scaling_contracts() {
        let e = env();
        let mut rng = seed::stream(3, &[]);
        let p = PolicyAgent::protagonist(&e, &NetworkConfig::default(), &mut rng).unwrap();
        assert_eq!(p.scale_action(&[1.0, -2.0]), vec![3.0, -3.0]);
        let bounds = NoiseBounds::default();
        let a = adversary_action_from_raw(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &bounds).unwrap();
        assert_eq!(a.requests[0].direction, 1.0);
        let zero = adversary_action_from_raw(&[0.0; 8], &bounds).unwrap();
        assert!(zero.requests.iter().all(|r| *r == Signals::ZERO));
    }

    #[test]
    fn flat_params_round_trip() {
        let e = env();
        let mut rng = seed::stream(4, &[]);
        let net = NetworkConfig {
            hidden: vec![8],
            ..NetworkConfig::default()
        };
        let p = PolicyAgent::protagonist(&e, &net, &mut rng).unwrap();
        let flat = p.flat_params();
        assert_eq!(flat.len(), p.param_count());
        let mut q = PolicyAgent::protagonist(&e, &net, &mut rng).unwrap();
        assert_ne!(p, q);
        q.set_flat_params(&flat);
        assert_eq!(p, q);
    }

    #[test]
    fn expert_grid_prefers_small_then_negative() {
        let g = ExpertConfig::default().grid().unwrap();
        assert_eq!(&g[..5], &[0.0, -1.0, 1.0, -2.0, 2.0]);
        assert_eq!(g.len(), 61);
        assert!(grid_search_yaw(
            &InflowCondition::new(6.5, 270.0),
            &FarmLayout::default(),
            &WakeModel::default(),
            &[],
            &[0]
        )
        .is_err());
    }

    #[test]
    fn default_steerable_set_is_the_west_turbine() {
        assert_eq!(ExpertConfig::default().steerable_turbines(&FarmLayout::default()), vec![0]);
    }

    #[test]
    fn easterly_inflow_leaves_nothing_to_steer() {
        let layout = FarmLayout::default();
        let sol = grid_search_yaw(
            &InflowCondition::new(6.5, 90.0),
            &layout,
            &WakeModel::default(),
            &ExpertConfig::default().grid().unwrap(),
            &[0],
        )
        .unwrap();
        assert_eq!(sol.offsets, vec![0.0, 0.0]);
        assert_eq!(sol.gain(), 0.0);
    }

    #[test]
    fn westerly_inflow_has_a_steering_gain() {
        let sol = grid_search_yaw(
            &InflowCondition::new(6.5, 270.0),
            &FarmLayout::default(),
            &WakeModel::default(),
            &ExpertConfig::default().grid().unwrap(),
            &[0],
        )
        .unwrap();
        assert_ne!(sol.offsets[0], 0.0);
        assert_eq!(sol.offsets[1], 0.0);
        assert!(sol.gain() > 0.0);
    }

    #[test]
    fn optimum_mirrors_across_the_layout_axis() {
        let grid = ExpertConfig::default().grid().unwrap();
        for delta in [1.5, 3.0] {
            let plus = grid_search_yaw(&InflowCondition::new(6.5, 270.0 + delta), &FarmLayout::default(), &WakeModel::default(), &grid, &[0]).unwrap();
            let minus = grid_search_yaw(&InflowCondition::new(6.5, 270.0 - delta), &FarmLayout::default(), &WakeModel::default(), &grid, &[0]).unwrap();
            assert_eq!(plus.offsets[0], -minus.offsets[0]);
            assert!(plus.offsets[0] != 0.0);
        }
    }

    #[test]
    fn baseline_never_moves() {
        let mut rng = seed::stream(1, &[]);
        let mut e = env();
        let obs = e.reset(None, &mut rng).unwrap();
        let d = Protagonist::Baseline.act(&obs.sensed_obs, &[5.0, -2.0], &mut rng, true).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
    }
}
