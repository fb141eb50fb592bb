//! PPO with a clipped surrogate, GAE and Adam, over a pool of environments.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::PolicyAgent;
use crate::error::{Error, Result};
use crate::nn::LN_2PI;
use crate::seed::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub update_epochs: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Agent steps per training round, summed over parallel environments.
    pub steps_per_iteration: u64,
    pub rollout_length: usize,
    pub n_envs: usize,
    /// Rollout length of the single-environment concurrent schedule.
    pub selfplay_rollout_length: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 64,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            update_epochs: 10,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            steps_per_iteration: 250_000,
            rollout_length: 512,
            n_envs: 6,
            selfplay_rollout_length: 2048,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.rollout_length == 0 || self.n_envs == 0 || self.selfplay_rollout_length == 0 {
            return Err(Error::InvalidInput("batch, rollout and env counts must be positive".into()));
        }
        if (self.rollout_length * self.n_envs) % self.batch_size != 0 {
            return Err(Error::InvalidInput(format!(
                "rollout_length × n_envs = {} is not divisible by batch_size {}",
                self.rollout_length * self.n_envs,
                self.batch_size
            )));
        }
        if self.selfplay_rollout_length % self.batch_size != 0 {
            return Err(Error::InvalidInput("selfplay_rollout_length is not divisible by batch_size".into()));
        }
        if !(self.learning_rate > 0.0 && self.clip_range > 0.0 && self.max_grad_norm > 0.0) {
            return Err(Error::InvalidInput("learning_rate, clip_range and max_grad_norm must be positive".into()));
        }
        if !((0.0..=1.0).contains(&self.gamma) && (0.0..=1.0).contains(&self.gae_lambda)) {
            return Err(Error::InvalidInput("gamma and gae_lambda must lie in [0, 1]".into()));
        }
        if self.update_epochs == 0 || self.steps_per_iteration == 0 {
            return Err(Error::InvalidInput("update_epochs and steps_per_iteration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A single-agent view of an episodic task. Actions arrive clipped to [-1, 1].
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<Transition>;
}

/// One environment's contiguous run of transitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segment {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// V(s_T) of the observation after the last transition.
    pub bootstrap_value: f64,
    /// Per-step mean reward of each episode that finished inside the segment.
    pub episode_means: Vec<f64>,
}

impl Segment {
    pub fn new(obs_dim: usize, action_dim: usize) -> Self {
        Self {
            obs_dim,
            action_dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], log_prob: f64, reward: f64, value: f64, done: bool) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(action.len(), self.action_dim);
        self.obs.extend_from_slice(obs);
        self.actions.extend_from_slice(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn obs_at(&self, t: usize) -> &[f64] {
        &self.obs[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn action_at(&self, t: usize) -> &[f64] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }
}

/// Transitions of one collection round, one segment per environment.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub segments: Vec<Segment>,
    pub segment_length: usize,
    /// Filled by [`RolloutBuffer::compute_advantages`], segment-major.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(segments: Vec<Segment>, segment_length: usize) -> Self {
        Self {
            segments,
            segment_length,
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        !self.segments.is_empty() && self.segments.iter().all(|s| s.len() == self.segment_length)
    }

    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        self.advantages.clear();
        self.returns.clear();
        for s in &self.segments {
            let (a, r) = compute_gae(&s.rewards, &s.values, &s.dones, s.bootstrap_value, gamma, lambda);
            self.advantages.extend(a);
            self.returns.extend(r);
        }
    }

    fn locate(&self, i: usize) -> (&Segment, usize) {
        (&self.segments[i / self.segment_length], i % self.segment_length)
    }

    pub fn mean_reward(&self) -> f64 {
        let n = self.len();
        self.segments.iter().flat_map(|s| &s.rewards).sum::<f64>() / n as f64
    }

    pub fn mean_episode_reward(&self) -> f64 {
        let eps: Vec<f64> = self.segments.iter().flat_map(|s| s.episode_means.iter().copied()).collect();
        if eps.is_empty() {
            self.mean_reward()
        } else {
            eps.iter().sum::<f64>() / eps.len() as f64
        }
    }
}

/// Advantages and returns of one sequence: δ_t = r_t + γV(s_{t+1})(1−d_t) − V(s_t),
/// A_t = δ_t + γλ(1−d_t)A_{t+1}, returns = A + V.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Zero mean, unit (population) standard deviation.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect()
}

struct Slot {
    obs: Vec<f64>,
    rng: StreamRng,
    episode_sum: f64,
    episode_len: usize,
}

/// Parallel environments with their current observations and sampling streams.
pub struct EnvPool<E> {
    envs: Vec<E>,
    slots: Vec<Slot>,
}

impl<E: Environment + Send> EnvPool<E> {
    pub fn new(mut envs: Vec<E>, sampling_seed: u64) -> Result<Self> {
        if envs.is_empty() {
            return Err(Error::InvalidInput("environment pool is empty".into()));
        }
        let mut slots = Vec::with_capacity(envs.len());
        for (i, e) in envs.iter_mut().enumerate() {
            slots.push(Slot {
                obs: e.reset()?,
                rng: seed::stream(sampling_seed, &[i as u64]),
                episode_sum: 0.0,
                episode_len: 0,
            });
        }
        Ok(Self { envs, slots })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[E] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [E] {
        &mut self.envs
    }

    pub fn into_envs(self) -> Vec<E> {
        self.envs
    }
}

fn collect_segment<E: Environment>(agent: &PolicyAgent, env: &mut E, slot: &mut Slot, length: usize) -> Result<Segment> {
    let mut seg = Segment::new(agent.obs_dim(), agent.action_dim());
    for _ in 0..length {
        let step = agent.act(&slot.obs, &mut slot.rng, false)?;
        let value = agent.value(&slot.obs)?;
        let clipped: Vec<f64> = step.raw.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        let tr = env.step(&clipped)?;
        seg.push(&slot.obs, &step.raw, step.log_prob, tr.reward, value, tr.done);
        slot.episode_sum += tr.reward;
        slot.episode_len += 1;
        if tr.done {
            seg.episode_means.push(slot.episode_sum / slot.episode_len as f64);
            slot.episode_sum = 0.0;
            slot.episode_len = 0;
            slot.obs = env.reset()?;
        } else {
            slot.obs = tr.obs;
        }
    }
    seg.bootstrap_value = agent.value(&slot.obs)?;
    Ok(seg)
}

/// Steps every environment `length` times with the (frozen) agent.
/// Episodes continue across calls; finished episodes reset automatically.
pub fn collect_rollout<E: Environment + Send>(agent: &PolicyAgent, pool: &mut EnvPool<E>, length: usize) -> Result<RolloutBuffer> {
    let segments = pool
        .envs
        .par_iter_mut()
        .zip(pool.slots.par_iter_mut())
        .map(|(env, slot)| collect_segment(agent, env, slot, length))
        .collect::<Result<Vec<_>>>()?;
    Ok(RolloutBuffer::new(segments, length))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, config: &PpoConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub mean_episode_reward: f64,
}

impl UpdateStats {
    pub fn is_finite(&self) -> bool {
        [self.policy_loss, self.value_loss, self.clip_fraction, self.approx_kl, self.mean_episode_reward]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Losses and flat gradient of one minibatch.
#[derive(Debug, Clone)]
pub struct MinibatchLoss {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub total: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Same order as [`PolicyAgent::flat_params`].
    pub grad: Vec<f64>,
}

/// Clipped-surrogate actor loss plus weighted value MSE, with analytic gradients.
pub fn minibatch_loss(
    agent: &PolicyAgent,
    obs: ArrayView2<'_, f64>,
    actions: ArrayView2<'_, f64>,
    old_log_probs: &[f64],
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
) -> Result<MinibatchLoss> {
    let b = obs.nrows();
    let bf = b as f64;
    let ad = agent.action_dim();
    let actor_cache = agent.actor.forward_batch(obs)?;
    let means = actor_cache.output();
    let log_std = &agent.head.log_std;
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();

    let mut grad_mean = Array2::<f64>::zeros((b, ad));
    let mut grad_log_std = vec![0.0; ad];
    let mut policy_loss = 0.0;
    let mut clipped = 0usize;
    let mut kl = 0.0;
    let (lo, hi) = (1.0 - config.clip_range, 1.0 + config.clip_range);
    for i in 0..b {
        let mut logp = 0.0;
        for j in 0..ad {
            let d = actions[[i, j]] - means[[i, j]];
            logp += -0.5 * d * d * inv_var[j] - log_std[j] - 0.5 * LN_2PI;
        }
        let log_ratio = logp - old_log_probs[i];
        let ratio = log_ratio.exp();
        let a = advantages[i];
        let unclipped = ratio * a;
        let clipped_obj = ratio.clamp(lo, hi) * a;
        policy_loss -= unclipped.min(clipped_obj);
        if (ratio - 1.0).abs() > config.clip_range {
            clipped += 1;
        }
        kl += (ratio - 1.0) - log_ratio;
        if unclipped <= clipped_obj {
            // d(-ratio·A)/dlogp, averaged over the batch
            let g = -unclipped / bf;
            for j in 0..ad {
                let d = actions[[i, j]] - means[[i, j]];
                grad_mean[[i, j]] = g * d * inv_var[j];
                grad_log_std[j] += g * (d * d * inv_var[j] - 1.0);
            }
        }
    }
    policy_loss /= bf;
    for g in grad_log_std.iter_mut() {
        *g -= config.entropy_coef;
    }

    let critic_cache = agent.critic.forward_batch(obs)?;
    let values = critic_cache.output();
    let mut grad_v = Array2::<f64>::zeros((b, 1));
    let mut value_loss = 0.0;
    for i in 0..b {
        let e = values[[i, 0]] - returns[i];
        value_loss += e * e;
        grad_v[[i, 0]] = config.value_coef * 2.0 * e / bf;
    }
    value_loss /= bf;
    let entropy = agent.head.entropy();
    let total = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "policy loss {policy_loss}, value loss {value_loss}, max |A| {}",
            advantages.iter().fold(0.0f64, |m, a| m.max(a.abs()))
        )));
    }

    let ga = agent.actor.backward_batch(&actor_cache, grad_mean.view())?;
    let gc = agent.critic.backward_batch(&critic_cache, grad_v.view())?;
    let mut grad = Vec::with_capacity(agent.param_count());
    ga.write_flat(&mut grad);
    grad.extend(grad_log_std);
    gc.write_flat(&mut grad);
    Ok(MinibatchLoss {
        policy_loss,
        value_loss,
        total,
        clip_fraction: clipped as f64 / bf,
        approx_kl: kl / bf,
        grad,
    })
}

/// Scales `grad` in place so its global L2 norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

/// A policy under training with its optimizer state and shuffling stream.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub agent: PolicyAgent,
    pub adam: Adam,
    pub rng: StreamRng,
    pub total_env_steps: u64,
}

impl PpoTrainer {
    pub fn new(agent: PolicyAgent, config: &PpoConfig, shuffle_seed: u64) -> Self {
        let adam = Adam::new(agent.param_count(), config);
        Self {
            agent,
            adam,
            rng: StreamRng::seed_from_u64(shuffle_seed),
            total_env_steps: 0,
        }
    }
}

/// Runs `update_epochs` passes of shuffled minibatches over a full buffer whose
/// advantages have been computed.
pub fn ppo_update(trainer: &mut PpoTrainer, buffer: &RolloutBuffer, config: &PpoConfig) -> Result<UpdateStats> {
    if !buffer.is_full() {
        return Err(Error::InvalidInput("rollout buffer is not full".into()));
    }
    let n = buffer.len();
    if buffer.advantages.len() != n {
        return Err(Error::InvalidInput("advantages have not been computed".into()));
    }
    let bs = config.batch_size;
    if n % bs != 0 {
        return Err(Error::InvalidInput(format!("buffer of {n} is not divisible by batch size {bs}")));
    }
    let adv = normalize_advantages(&buffer.advantages);
    let od = trainer.agent.obs_dim();
    let ad = trainer.agent.action_dim();
    let mut params = trainer.agent.flat_params();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut obs = Array2::<f64>::zeros((bs, od));
    let mut act = Array2::<f64>::zeros((bs, ad));
    let mut old_lp = vec![0.0; bs];
    let mut mb_adv = vec![0.0; bs];
    let mut mb_ret = vec![0.0; bs];
    let (mut pl, mut vl, mut cf, mut kl, mut count) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for _ in 0..config.update_epochs {
        idx.shuffle(&mut trainer.rng);
        for chunk in idx.chunks(bs) {
            for (r, &i) in chunk.iter().enumerate() {
                let (seg, t) = buffer.locate(i);
                obs.row_mut(r).as_slice_mut().unwrap().copy_from_slice(seg.obs_at(t));
                act.row_mut(r).as_slice_mut().unwrap().copy_from_slice(seg.action_at(t));
                old_lp[r] = seg.log_probs[t];
                mb_adv[r] = adv[i];
                mb_ret[r] = buffer.returns[i];
            }
            let mut loss = minibatch_loss(&trainer.agent, obs.view(), act.view(), &old_lp, &mb_adv, &mb_ret, config)?;
            if loss.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss("gradient contains non-finite values".into()));
            }
            clip_grad_norm(&mut loss.grad, config.max_grad_norm);
            trainer.adam.step(&mut params, &loss.grad);
            trainer.agent.set_flat_params(&params);
            pl += loss.policy_loss;
            vl += loss.value_loss;
            cf += loss.clip_fraction;
            kl += loss.approx_kl;
            count += 1;
        }
    }
    let c = count as f64;
    let stats = UpdateStats {
        policy_loss: pl / c,
        value_loss: vl / c,
        clip_fraction: cf / c,
        approx_kl: kl / c,
        mean_episode_reward: buffer.mean_episode_reward(),
    };
    if !stats.is_finite() {
        return Err(Error::NonFiniteLoss(format!("{stats:?}")));
    }
    Ok(stats)
}

/// Alternates collection and updates until at least `steps_per_iteration`
/// agent steps have been consumed. `on_update` sees each update's statistics
/// and the cumulative step count.
pub fn train_iteration<E: Environment + Send>(
    trainer: &mut PpoTrainer,
    pool: &mut EnvPool<E>,
    config: &PpoConfig,
    rollout_length: usize,
    mut on_update: impl FnMut(&UpdateStats, u64) -> Result<()>,
) -> Result<Vec<UpdateStats>> {
    let per_round = (rollout_length * pool.len()) as u64;
    let mut consumed = 0u64;
    let mut log = Vec::new();
    while consumed < config.steps_per_iteration {
        let mut buffer = collect_rollout(&trainer.agent, pool, rollout_length)?;
        buffer.compute_advantages(config.gamma, config.gae_lambda);
        let stats = ppo_update(trainer, &buffer, config)?;
        consumed += per_round;
        trainer.total_env_steps += per_round;
        on_update(&stats, consumed)?;
        log.push(stats);
    }
    Ok(log)
}

/// Single-turbine yaw alignment toy task with a known optimum. The state is a
/// yaw error e (degrees); each step moves it by 5°·a and pays cos²(e).
#[derive(Debug, Clone)]
pub struct ToyYawEnv {
    error: f64,
    step: usize,
    rng: StreamRng,
}

impl ToyYawEnv {
    pub const MAX_INITIAL_ERROR: f64 = 40.0;
    pub const RATE: f64 = 5.0;
    pub const EPISODE_STEPS: usize = 20;

    pub fn new(seed: u64) -> Self {
        Self {
            error: 0.0,
            step: 0,
            rng: StreamRng::seed_from_u64(seed),
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.error / Self::MAX_INITIAL_ERROR]
    }

    pub fn reset_to(&mut self, error: f64) -> Vec<f64> {
        self.error = error;
        self.step = 0;
        self.obs()
    }

    pub fn reward_for(error_deg: f64) -> f64 {
        error_deg.to_radians().cos().powi(2)
    }

    /// Mean per-step reward of the rate-limited greedy correction from `e0`.
    pub fn optimal_mean_reward(e0: f64) -> f64 {
        let mut e = e0.abs();
        let mut sum = 0.0;
        for _ in 0..Self::EPISODE_STEPS {
            e = (e - Self::RATE).max(0.0);
            sum += Self::reward_for(e);
        }
        sum / Self::EPISODE_STEPS as f64
    }

    /// Fixed evaluation starts spanning the initial-error range.
    pub fn evaluation_starts() -> Vec<f64> {
        (0..9).map(|i| -40.0 + 10.0 * i as f64).collect()
    }
}

impl Environment for ToyYawEnv {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        let e = self.rng.random_range(-Self::MAX_INITIAL_ERROR..Self::MAX_INITIAL_ERROR);
        Ok(self.reset_to(e))
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        if self.step >= Self::EPISODE_STEPS {
            return Err(Error::EpisodeFinished);
        }
        self.error = (self.error + Self::RATE * action[0].clamp(-1.0, 1.0)).clamp(-90.0, 90.0);
        self.step += 1;
        Ok(Transition {
            obs: self.obs(),
            reward: Self::reward_for(self.error),
            done: self.step >= Self::EPISODE_STEPS,
        })
    }
}

/// Deterministic-policy mean reward over the fixed evaluation starts.
pub fn evaluate_toy(agent: &PolicyAgent) -> Result<f64> {
    let mut env = ToyYawEnv::new(0);
    let mut rng = seed::stream(0, &[]);
    let starts = ToyYawEnv::evaluation_starts();
    let mut total = 0.0;
    for &e0 in &starts {
        let mut obs = env.reset_to(e0);
        let mut sum = 0.0;
        loop {
            let a = agent.act(&obs, &mut rng, true)?.raw;
            let tr = env.step(&[a[0].clamp(-1.0, 1.0)])?;
            sum += tr.reward;
            obs = tr.obs;
            if tr.done {
                break;
            }
        }
        total += sum / ToyYawEnv::EPISODE_STEPS as f64;
    }
    Ok(total / starts.len() as f64)
}

pub fn toy_optimum() -> f64 {
    let starts = ToyYawEnv::evaluation_starts();
    starts.iter().map(|&e| ToyYawEnv::optimal_mean_reward(e)).sum::<f64>() / starts.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentRole, NetworkConfig};
    use crate::seed;

    fn small_net() -> NetworkConfig {
        NetworkConfig {
            hidden: vec![8, 8],
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn one_step_terminal_gae() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[true], 5.0, 0.99, 0.95);
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn zero_discount_collapses_to_td_error() {
        let rewards = [0.5, -1.0, 2.0];
        let values = [0.1, 0.2, 0.3];
        let (a, _) = compute_gae(&rewards, &values, &[false, false, false], 9.0, 0.0, 0.95);
        for t in 0..3 {
            assert!((a[t] - (rewards[t] - values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn normalized_advantages_have_unit_moments() {
        let adv: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.0).collect();
        let n = normalize_advantages(&adv);
        let mean = n.iter().sum::<f64>() / 100.0;
        let std = (n.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
        assert!(mean.abs() < 1e-10);
        assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identity_policy_has_unit_ratio() {
        let mut rng = seed::stream(3, &[]);
        let agent = PolicyAgent::new(AgentRole::Protagonist, 3, vec![1.0, 1.0], &small_net(), &mut rng).unwrap();
        let obs = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 * 0.1);
        let mut act = Array2::zeros((4, 2));
        let mut lp = vec![0.0; 4];
        for i in 0..4 {
            let s = agent.act(obs.row(i).as_slice().unwrap(), &mut rng, false).unwrap();
            act.row_mut(i).assign(&ndarray::arr1(&s.raw));
            lp[i] = s.log_prob;
        }
        let adv = [0.5, -1.0, 2.0, 0.1];
        let loss = minibatch_loss(&agent, obs.view(), act.view(), &lp, &adv, &[0.0; 4], &PpoConfig::default()).unwrap();
        assert!((loss.policy_loss + adv.iter().sum::<f64>() / 4.0).abs() < 1e-12);
        assert_eq!(loss.clip_fraction, 0.0);
        assert!(loss.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn large_ratio_uses_clamped_value() {
        let mut rng = seed::stream(4, &[]);
        let agent = PolicyAgent::new(AgentRole::Protagonist, 1, vec![1.0], &small_net(), &mut rng).unwrap();
        let obs = Array2::from_elem((1, 1), 0.3);
        let act = Array2::from_elem((1, 1), 0.2);
        let mean = agent.mean_action(&[0.3]).unwrap();
        let lp = agent.head.log_prob(&mean, &[0.2]);
        // old log prob chosen so the ratio is exactly 1.5
        let old = lp - 1.5f64.ln();
        let loss = minibatch_loss(&agent, obs.view(), act.view(), &[old], &[1.0], &[0.0], &PpoConfig::default()).unwrap();
        assert!((loss.policy_loss + 1.2).abs() < 1e-12);
        assert_eq!(loss.clip_fraction, 1.0);
        // clipped branch carries no actor gradient
        let n_actor = agent.actor.param_count() + 1;
        assert!(loss.grad[..n_actor].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = seed::stream(5, &[]);
        let net = NetworkConfig {
            hidden: vec![4],
            actor_output_gain: 1.0,
            ..NetworkConfig::default()
        };
        let mut agent = PolicyAgent::new(AgentRole::Protagonist, 2, vec![1.0, 1.0], &net, &mut rng).unwrap();
        let obs = Array2::from_shape_fn((3, 2), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64);
        let act = Array2::from_shape_fn((3, 2), |(i, j)| 0.1 * (i as f64) + 0.05 * j as f64);
        let mut old = vec![0.0; 3];
        for i in 0..3 {
            let m = agent.mean_action(obs.row(i).as_slice().unwrap()).unwrap();
            // keep ratios strictly inside the clip band
            old[i] = agent.head.log_prob(&m, act.row(i).as_slice().unwrap()) + 0.05 * (i as f64 - 1.0);
        }
        let adv = [0.7, -0.4, 1.1];
        let ret = [0.2, -0.1, 0.5];
        let cfg = PpoConfig {
            entropy_coef: 0.01,
            ..PpoConfig::default()
        };
        let base = minibatch_loss(&agent, obs.view(), act.view(), &old, &adv, &ret, &cfg).unwrap();
        let p0 = agent.flat_params();
        let h = 1e-6;
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] += h;
            agent.set_flat_params(&p);
            let up = minibatch_loss(&agent, obs.view(), act.view(), &old, &adv, &ret, &cfg).unwrap().total;
            p[k] -= 2.0 * h;
            agent.set_flat_params(&p);
            let dn = minibatch_loss(&agent, obs.view(), act.view(), &old, &adv, &ret, &cfg).unwrap().total;
            let fd = (up - dn) / (2.0 * h);
            let g = base.grad[k];
            assert!((fd - g).abs() <= 1e-6 + 1e-4 * g.abs().max(fd.abs()), "param {k}: {g} vs {fd}");
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let cfg = PpoConfig::default();
        let mut adam = Adam::new(2, &cfg);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.5, -3.0]);
        assert!((p[0] - (1.0 - 3e-4)).abs() < 1e-10);
        assert!((p[1] - (-1.0 + 3e-4)).abs() < 1e-10);
    }

    #[test]
    fn grad_clipping_bounds_global_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((n - 0.5).abs() < 1e-6);
    }

    #[test]
    fn config_divisibility() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig {
            rollout_length: 100,
            ..PpoConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn collection_is_deterministic_and_continues_episodes() {
        let mut rng = seed::stream(6, &[]);
        let agent = PolicyAgent::new(AgentRole::Protagonist, 1, vec![5.0], &small_net(), &mut rng).unwrap();
        let run = || {
            let mut pool = EnvPool::new((0..3).map(|i| ToyYawEnv::new(100 + i)).collect(), 7).unwrap();
            let a = collect_rollout(&agent, &mut pool, 30).unwrap();
            let b = collect_rollout(&agent, &mut pool, 30).unwrap();
            (a, b)
        };
        let (a1, b1) = run();
        let (a2, b2) = run();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(a1.len(), 90);
        assert!(a1.is_full());
        // 30 steps over 20-step episodes: one done at t = 19 in both rounds' union
        for s in &a1.segments {
            assert_eq!(s.dones.iter().filter(|d| **d).count(), 1);
            assert!(s.dones[19]);
        }
        for s in &b1.segments {
            assert!(s.dones[9]);
        }
    }
}
