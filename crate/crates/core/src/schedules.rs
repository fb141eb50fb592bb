//! Co-training schedules and the opponent zoo.
//!
//! * Arms race: protagonist n trains against adversary n−1 only (procedural
//!   noise for n = 0), then adversary n trains against protagonist n.
//! * Synthetic self-play: like the arms race, but protagonist n draws its
//!   opponent uniformly at every episode start from procedural noise and all
//!   earlier adversaries.
//! * Self-play: one protagonist and one adversary learn concurrently from the
//!   same episodes, snapshotted once per iteration.
//! * Procedural only: one protagonist trained against procedural noise.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::agents::{
    adversary_action_from_raw, adversary_input, AgentRole, NetworkConfig, Opponent, OpponentState, PolicyAgent,
    Protagonist,
};
use crate::artifact::{self, ArtifactMeta};
use crate::checkpoint::{self, Checkpoint, CheckpointMetadata};
use crate::env::{FarmEnv, Observation};
use crate::error::{Error, Result};
use crate::gauntlet::{EvalSetup, PROCEDURAL};
use crate::noise::{NoiseBounds, SensorErrorState};
use crate::ppo::{self, EnvPool, Environment, PpoConfig, PpoTrainer, RolloutBuffer, Segment, Transition, UpdateStats};
use crate::seed::{self, tag, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    ArmsRace,
    Ssp,
    SelfPlay,
    ProceduralOnly,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 4] = [
        ScheduleKind::ArmsRace,
        ScheduleKind::Ssp,
        ScheduleKind::SelfPlay,
        ScheduleKind::ProceduralOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::ArmsRace => "arms_race",
            ScheduleKind::Ssp => "ssp",
            ScheduleKind::SelfPlay => "self_play",
            ScheduleKind::ProceduralOnly => "procedural_only",
        }
    }

    fn tag(self) -> u64 {
        match self {
            ScheduleKind::ArmsRace => 20,
            ScheduleKind::Ssp => 21,
            ScheduleKind::SelfPlay => tag::SELF_PLAY,
            ScheduleKind::ProceduralOnly => tag::PROCEDURAL_ONLY,
        }
    }
}

pub const LIVE: &str = "live";

pub fn protagonist_label(n: usize) -> String {
    format!("P{n}")
}

pub fn adversary_label(n: usize) -> String {
    format!("A{n}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSetup {
    pub world: EvalSetup,
    pub ppo: PpoConfig,
    pub net: NetworkConfig,
    pub seed: u64,
    pub n_iterations: usize,
    pub warm_start: bool,
}

impl TrainingSetup {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        self.world.env.validate()?;
        self.world.noise.validate()?;
        if self.n_iterations == 0 {
            return Err(Error::InvalidInput("n_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZooEntry {
    pub label: String,
    pub agent: PolicyAgent,
    pub metadata: CheckpointMetadata,
}

impl ZooEntry {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_agent(&self.agent, self.metadata.clone())
    }
}

/// Checkpoints in creation order; index n holds generation n.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Zoo {
    pub protagonists: Vec<ZooEntry>,
    pub adversaries: Vec<ZooEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogRow {
    pub schedule: String,
    pub trainee: String,
    pub iteration: usize,
    pub update: usize,
    pub env_steps: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub mean_episode_reward: f64,
    /// Opponents the trainee may face this iteration, `;`-separated.
    pub opponents: String,
}

/// Which opponent one training episode used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub schedule: String,
    pub trainee: String,
    pub iteration: usize,
    pub env: usize,
    pub episode: usize,
    pub opponent: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub kind: ScheduleKind,
    pub zoo: Zoo,
    pub training_log: Vec<TrainingLogRow>,
    pub audit: Vec<AuditRow>,
}

/// Protagonist-side training view: sensed observations, reward r.
pub struct ProtagonistTrainingEnv {
    env: FarmEnv,
    bounds: NoiseBounds,
    opponents: Arc<Vec<(String, Opponent)>>,
    uniform: bool,
    rng: StreamRng,
    current: usize,
    state: Option<OpponentState>,
    true_obs: Option<Observation>,
    episodes: usize,
    audit: Vec<(usize, String)>,
}

impl ProtagonistTrainingEnv {
    /// With `uniform`, each episode draws its opponent uniformly from the pool;
    /// otherwise the pool must hold exactly one opponent.
    pub fn new(env: FarmEnv, bounds: NoiseBounds, opponents: Arc<Vec<(String, Opponent)>>, uniform: bool, env_seed: u64) -> Result<Self> {
        if opponents.is_empty() || (!uniform && opponents.len() != 1) {
            return Err(Error::InvalidInput("a fixed-opponent pool must contain exactly one opponent".into()));
        }
        Ok(Self {
            env,
            bounds,
            opponents,
            uniform,
            rng: StreamRng::seed_from_u64(env_seed),
            current: 0,
            state: None,
            true_obs: None,
            episodes: 0,
            audit: Vec::new(),
        })
    }

    /// (episode index, opponent label) for every episode started so far.
    pub fn audit(&self) -> &[(usize, String)] {
        &self.audit
    }

    pub fn current_opponent(&self) -> &str {
        &self.opponents[self.current].0
    }
}

impl Environment for ProtagonistTrainingEnv {
    fn obs_dim(&self) -> usize {
        self.env.observation_len()
    }

    fn action_dim(&self) -> usize {
        self.env.n_turbines()
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.current = if self.uniform {
            self.rng.random_range(0..self.opponents.len())
        } else {
            0
        };
        let n = self.env.n_turbines();
        let state = OpponentState::start(&self.opponents[self.current].1, &self.bounds, n, &mut self.rng);
        let init = state.initial_errors(&self.bounds, &mut self.rng);
        let obs = self.env.reset_with_errors(None, &init, &mut self.rng)?;
        self.state = Some(state);
        self.true_obs = Some(obs.true_obs);
        self.audit.push((self.episodes, self.opponents[self.current].0.clone()));
        self.episodes += 1;
        Ok(obs.sensed_obs.as_slice().to_vec())
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let scale = self.env.config().max_yaw_delta_per_step;
        let delta: Vec<f64> = action.iter().map(|a| a * scale).collect();
        let include = self.env.config().adversary_observes_error;
        let state = self.state.as_mut().ok_or_else(|| Error::Internal("step before reset".into()))?;
        let true_obs = self.true_obs.as_ref().expect("set with state");
        let errors = state.next_errors(&self.opponents[self.current].1, true_obs, &self.bounds, include, &mut self.rng, true)?;
        let out = self.env.step(&delta, &errors)?;
        self.true_obs = Some(out.true_obs);
        Ok(Transition {
            obs: out.sensed_obs.as_slice().to_vec(),
            reward: out.reward.reward,
            done: out.done,
        })
    }
}

/// Adversary-side training view: true observations, reward −r.
pub struct AdversaryTrainingEnv {
    env: FarmEnv,
    bounds: NoiseBounds,
    protagonist: Arc<Protagonist>,
    label: String,
    rng: StreamRng,
    state: SensorErrorState,
    sensed_obs: Option<Observation>,
    episodes: usize,
    audit: Vec<(usize, String)>,
}

impl AdversaryTrainingEnv {
    pub fn new(env: FarmEnv, bounds: NoiseBounds, protagonist: Arc<Protagonist>, label: String, env_seed: u64) -> Self {
        let n = env.n_turbines();
        Self {
            env,
            bounds,
            protagonist,
            label,
            rng: StreamRng::seed_from_u64(env_seed),
            state: SensorErrorState::zero(n),
            sensed_obs: None,
            episodes: 0,
            audit: Vec::new(),
        }
    }

    pub fn audit(&self) -> &[(usize, String)] {
        &self.audit
    }

    pub fn errors(&self) -> &[crate::signals::Signals] {
        self.state.errors()
    }
}

impl Environment for AdversaryTrainingEnv {
    fn obs_dim(&self) -> usize {
        let extra = if self.env.config().adversary_observes_error { self.env.n_turbines() * 4 } else { 0 };
        self.env.observation_len() + extra
    }

    fn action_dim(&self) -> usize {
        self.env.n_turbines() * 4
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.state = SensorErrorState::zero(self.env.n_turbines());
        let obs = self.env.reset_with_errors(None, self.state.errors(), &mut self.rng)?;
        self.sensed_obs = Some(obs.sensed_obs);
        self.audit.push((self.episodes, self.label.clone()));
        self.episodes += 1;
        let include = self.env.config().adversary_observes_error;
        Ok(adversary_input(&obs.true_obs, self.state.errors(), &self.bounds, include))
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let sensed = self.sensed_obs.as_ref().ok_or_else(|| Error::Internal("step before reset".into()))?;
        let delta = self.protagonist.act(sensed, self.env.physical_yaw()?, &mut self.rng, true)?;
        let request = adversary_action_from_raw(action, &self.bounds)?;
        self.state.apply_delta(&request, &self.bounds)?;
        let out = self.env.step(&delta, self.state.errors())?;
        let include = self.env.config().adversary_observes_error;
        let obs = adversary_input(&out.true_obs, self.state.errors(), &self.bounds, include);
        self.sensed_obs = Some(out.sensed_obs);
        Ok(Transition {
            obs,
            reward: -out.reward.reward,
            done: out.done,
        })
    }
}

fn seed_for(setup: &TrainingSetup, kind: ScheduleKind, role: u64, iteration: usize, purpose: u64) -> u64 {
    seed::derive_seed(setup.seed, &[kind.tag(), role, iteration as u64, purpose])
}

struct Trained {
    agent: PolicyAgent,
    steps: u64,
    audit: Vec<Vec<(usize, String)>>,
}

#[allow(clippy::too_many_arguments)]
fn train_in_pool<E: Environment + Send>(
    setup: &TrainingSetup,
    kind: ScheduleKind,
    role: u64,
    iteration: usize,
    agent: PolicyAgent,
    envs: Vec<E>,
    audit_of: impl Fn(&E) -> Vec<(usize, String)>,
    mut log: impl FnMut(usize, u64, &UpdateStats),
) -> Result<Trained> {
    let mut trainer = PpoTrainer::new(agent, &setup.ppo, seed_for(setup, kind, role, iteration, tag::SHUFFLE));
    let mut pool = EnvPool::new(envs, seed_for(setup, kind, role, iteration, tag::POLICY_SAMPLE))?;
    let mut update = 0;
    ppo::train_iteration(&mut trainer, &mut pool, &setup.ppo, setup.ppo.rollout_length, |stats, consumed| {
        log(update, consumed, stats);
        update += 1;
        Ok(())
    })?;
    let audit = pool.envs().iter().map(audit_of).collect();
    Ok(Trained {
        agent: trainer.agent,
        steps: trainer.total_env_steps,
        audit,
    })
}

struct RunBuilder<'a> {
    setup: &'a TrainingSetup,
    kind: ScheduleKind,
    record: RunRecord,
    observer: &'a mut dyn FnMut(&TrainingLogRow),
}

impl<'a> RunBuilder<'a> {
    fn new(setup: &'a TrainingSetup, kind: ScheduleKind, observer: &'a mut dyn FnMut(&TrainingLogRow)) -> Self {
        Self {
            setup,
            kind,
            record: RunRecord {
                kind,
                zoo: Zoo::default(),
                training_log: Vec::new(),
                audit: Vec::new(),
            },
            observer,
        }
    }

    fn log(&mut self, trainee: &str, iteration: usize, update: usize, steps: u64, stats: &UpdateStats, opponents: &str) {
        let row = TrainingLogRow {
            schedule: self.kind.name().into(),
            trainee: trainee.into(),
            iteration,
            update,
            env_steps: steps,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
            mean_episode_reward: stats.mean_episode_reward,
            opponents: opponents.into(),
        };
        (self.observer)(&row);
        self.record.training_log.push(row);
    }

    fn add_audit(&mut self, trainee: &str, iteration: usize, per_env: Vec<Vec<(usize, String)>>) {
        for (env, rows) in per_env.into_iter().enumerate() {
            for (episode, opponent) in rows {
                self.record.audit.push(AuditRow {
                    schedule: self.kind.name().into(),
                    trainee: trainee.into(),
                    iteration,
                    env,
                    episode,
                    opponent,
                });
            }
        }
    }

    fn metadata(&self, role: AgentRole, iteration: usize, steps: u64, label: &str) -> CheckpointMetadata {
        CheckpointMetadata {
            role,
            schedule: self.kind.name().into(),
            iteration,
            seed: self.setup.seed,
            total_env_steps: steps,
            label: label.into(),
        }
    }

    fn fresh_env(&self) -> Result<FarmEnv> {
        self.setup.world.make_env()
    }

    fn initial_agent(&self, role: AgentRole, iteration: usize, previous: Option<&PolicyAgent>) -> Result<PolicyAgent> {
        if self.setup.warm_start {
            if let Some(p) = previous {
                return Ok(p.clone());
            }
        }
        let (role_tag, ctor) = match role {
            AgentRole::Adversary => (tag::ADVERSARY, true),
            _ => (tag::PROTAGONIST, false),
        };
        let mut rng = seed::stream(seed_for(self.setup, self.kind, role_tag, iteration, tag::POLICY_INIT), &[]);
        let env = self.fresh_env()?;
        if ctor {
            PolicyAgent::adversary(&env, &self.setup.world.noise, &self.setup.net, &mut rng)
        } else {
            PolicyAgent::protagonist(&env, &self.setup.net, &mut rng)
        }
    }

    fn train_protagonist(&mut self, iteration: usize, opponents: Vec<(String, Opponent)>, uniform: bool) -> Result<()> {
        let label = if self.kind == ScheduleKind::ProceduralOnly {
            protagonist_label(0)
        } else {
            protagonist_label(iteration)
        };
        let previous = self.record.zoo.protagonists.last().map(|e| e.agent.clone());
        let agent = self.initial_agent(AgentRole::Protagonist, iteration, previous.as_ref())?;
        let names = opponents.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join(";");
        let pool = Arc::new(opponents);
        let mut envs = Vec::new();
        for i in 0..self.setup.ppo.n_envs {
            let s = seed::derive_seed(seed_for(self.setup, self.kind, tag::PROTAGONIST, iteration, tag::ENV), &[i as u64]);
            envs.push(ProtagonistTrainingEnv::new(self.fresh_env()?, self.setup.world.noise.clone(), pool.clone(), uniform, s)?);
        }
        let mut rows = Vec::new();
        let trained = train_in_pool(
            self.setup,
            self.kind,
            tag::PROTAGONIST,
            iteration,
            agent,
            envs,
            |e| e.audit().to_vec(),
            |u, s, st| rows.push((u, s, *st)),
        )?;
        for (u, s, st) in rows {
            self.log(&label, iteration, u, s, &st, &names);
        }
        self.add_audit(&label, iteration, trained.audit);
        let metadata = self.metadata(AgentRole::Protagonist, iteration, trained.steps, &label);
        self.record.zoo.protagonists.push(ZooEntry {
            label,
            agent: trained.agent,
            metadata,
        });
        Ok(())
    }

    fn train_adversary(&mut self, iteration: usize) -> Result<()> {
        let label = adversary_label(iteration);
        let target = self.record.zoo.protagonists.last().expect("protagonist trained first");
        let target_label = target.label.clone();
        let target = Arc::new(Protagonist::Policy(target.agent.clone()));
        let previous = self.record.zoo.adversaries.last().map(|e| e.agent.clone());
        let agent = self.initial_agent(AgentRole::Adversary, iteration, previous.as_ref())?;
        let mut envs = Vec::new();
        for i in 0..self.setup.ppo.n_envs {
            let s = seed::derive_seed(seed_for(self.setup, self.kind, tag::ADVERSARY, iteration, tag::ENV), &[i as u64]);
            envs.push(AdversaryTrainingEnv::new(
                self.fresh_env()?,
                self.setup.world.noise.clone(),
                target.clone(),
                target_label.clone(),
                s,
            ));
        }
        let mut rows = Vec::new();
        let trained = train_in_pool(
            self.setup,
            self.kind,
            tag::ADVERSARY,
            iteration,
            agent,
            envs,
            |e| e.audit().to_vec(),
            |u, s, st| rows.push((u, s, *st)),
        )?;
        for (u, s, st) in rows {
            self.log(&label, iteration, u, s, &st, &target_label);
        }
        self.add_audit(&label, iteration, trained.audit);
        let metadata = self.metadata(AgentRole::Adversary, iteration, trained.steps, &label);
        self.record.zoo.adversaries.push(ZooEntry {
            label,
            agent: trained.agent,
            metadata,
        });
        Ok(())
    }
}

pub fn arms_race_run(setup: &TrainingSetup, observer: &mut dyn FnMut(&TrainingLogRow)) -> Result<RunRecord> {
    setup.validate()?;
    let mut b = RunBuilder::new(setup, ScheduleKind::ArmsRace, observer);
    for n in 0..setup.n_iterations {
        let opponent = if n == 0 {
            (PROCEDURAL.to_string(), Opponent::Procedural)
        } else {
            let prev = &b.record.zoo.adversaries[n - 1];
            (prev.label.clone(), Opponent::Adversary(prev.agent.clone()))
        };
        b.train_protagonist(n, vec![opponent], false)?;
        b.train_adversary(n)?;
    }
    Ok(b.record)
}

/// Opponent pool of synthetic self-play generation n: procedural noise plus
/// adversaries 0..n.
pub fn ssp_pool(zoo: &Zoo, n: usize) -> Vec<(String, Opponent)> {
    let mut pool = vec![(PROCEDURAL.to_string(), Opponent::Procedural)];
    for e in &zoo.adversaries[..n] {
        pool.push((e.label.clone(), Opponent::Adversary(e.agent.clone())));
    }
    pool
}

pub fn ssp_run(setup: &TrainingSetup, observer: &mut dyn FnMut(&TrainingLogRow)) -> Result<RunRecord> {
    setup.validate()?;
    let mut b = RunBuilder::new(setup, ScheduleKind::Ssp, observer);
    for n in 0..setup.n_iterations {
        let pool = ssp_pool(&b.record.zoo, n);
        b.train_protagonist(n, pool, true)?;
        b.train_adversary(n)?;
    }
    Ok(b.record)
}

pub fn procedural_only_run(setup: &TrainingSetup, observer: &mut dyn FnMut(&TrainingLogRow)) -> Result<RunRecord> {
    setup.validate()?;
    let mut b = RunBuilder::new(setup, ScheduleKind::ProceduralOnly, observer);
    b.train_protagonist(0, vec![(PROCEDURAL.to_string(), Opponent::Procedural)], false)?;
    Ok(b.record)
}

/// Shared episode state of concurrent self-play.
pub struct SelfPlaySession {
    env: FarmEnv,
    bounds: NoiseBounds,
    env_rng: StreamRng,
    protagonist_rng: StreamRng,
    adversary_rng: StreamRng,
    errors: SensorErrorState,
    true_obs: Observation,
    sensed_obs: Observation,
    episodes: usize,
    episode_sum: f64,
    episode_len: usize,
}

impl SelfPlaySession {
    pub fn new(env: FarmEnv, bounds: NoiseBounds, seed_base: u64) -> Result<Self> {
        let mut env = env;
        let mut env_rng = seed::stream(seed_base, &[tag::ENV]);
        let errors = SensorErrorState::zero(env.n_turbines());
        let obs = env.reset_with_errors(None, errors.errors(), &mut env_rng)?;
        Ok(Self {
            env,
            bounds,
            env_rng,
            protagonist_rng: seed::stream(seed_base, &[tag::PROTAGONIST, tag::POLICY_SAMPLE]),
            adversary_rng: seed::stream(seed_base, &[tag::ADVERSARY, tag::POLICY_SAMPLE]),
            errors,
            true_obs: obs.true_obs,
            sensed_obs: obs.sensed_obs,
            episodes: 1,
            episode_sum: 0.0,
            episode_len: 0,
        })
    }

    pub fn episodes_started(&self) -> usize {
        self.episodes
    }

    /// Steps both live agents `length` times and returns their buffers:
    /// (protagonist, storing r on sensed observations; adversary, storing −r
    /// on true observations).
    pub fn collect(&mut self, protagonist: &PolicyAgent, adversary: &PolicyAgent, length: usize) -> Result<(RolloutBuffer, RolloutBuffer)> {
        let include = self.env.config().adversary_observes_error;
        let mut sp = Segment::new(protagonist.obs_dim(), protagonist.action_dim());
        let mut sa = Segment::new(adversary.obs_dim(), adversary.action_dim());
        for _ in 0..length {
            let p_obs = self.sensed_obs.as_slice().to_vec();
            let a_obs = adversary_input(&self.true_obs, self.errors.errors(), &self.bounds, include);
            let p = protagonist.act(&p_obs, &mut self.protagonist_rng, false)?;
            let a = adversary.act(&a_obs, &mut self.adversary_rng, false)?;
            let vp = protagonist.value(&p_obs)?;
            let va = adversary.value(&a_obs)?;
            let delta = protagonist.scale_action(&p.raw);
            self.errors.apply_delta(&adversary_action_from_raw(&a.raw, &self.bounds)?, &self.bounds)?;
            let out = self.env.step(&delta, self.errors.errors())?;
            let r = out.reward.reward;
            sp.push(&p_obs, &p.raw, p.log_prob, r, vp, out.done);
            sa.push(&a_obs, &a.raw, a.log_prob, -r, va, out.done);
            self.episode_sum += r;
            self.episode_len += 1;
            if out.done {
                let mean = self.episode_sum / self.episode_len as f64;
                sp.episode_means.push(mean);
                sa.episode_means.push(-mean);
                self.episode_sum = 0.0;
                self.episode_len = 0;
                self.errors = SensorErrorState::zero(self.env.n_turbines());
                let obs = self.env.reset_with_errors(None, self.errors.errors(), &mut self.env_rng)?;
                self.true_obs = obs.true_obs;
                self.sensed_obs = obs.sensed_obs;
                self.episodes += 1;
            } else {
                self.true_obs = out.true_obs;
                self.sensed_obs = out.sensed_obs;
            }
        }
        sp.bootstrap_value = protagonist.value(self.sensed_obs.as_slice())?;
        let a_obs = adversary_input(&self.true_obs, self.errors.errors(), &self.bounds, include);
        sa.bootstrap_value = adversary.value(&a_obs)?;
        Ok((RolloutBuffer::new(vec![sp], length), RolloutBuffer::new(vec![sa], length)))
    }
}

pub fn selfplay_run(setup: &TrainingSetup, observer: &mut dyn FnMut(&TrainingLogRow)) -> Result<RunRecord> {
    setup.validate()?;
    let kind = ScheduleKind::SelfPlay;
    let mut b = RunBuilder::new(setup, kind, observer);
    let mut p = PpoTrainer::new(
        b.initial_agent(AgentRole::Protagonist, 0, None)?,
        &setup.ppo,
        seed_for(setup, kind, tag::PROTAGONIST, 0, tag::SHUFFLE),
    );
    let mut a = PpoTrainer::new(
        b.initial_agent(AgentRole::Adversary, 0, None)?,
        &setup.ppo,
        seed_for(setup, kind, tag::ADVERSARY, 0, tag::SHUFFLE),
    );
    let mut session = SelfPlaySession::new(b.fresh_env()?, setup.world.noise.clone(), seed_for(setup, kind, 0, 0, tag::ENV))?;
    let len = setup.ppo.selfplay_rollout_length;
    for n in 0..setup.n_iterations {
        let p_label = protagonist_label(n);
        let a_label = adversary_label(n);
        let first_episode = session.episodes_started() - 1;
        let mut consumed = 0u64;
        let mut update = 0;
        while consumed < setup.ppo.steps_per_iteration {
            let (mut bp, mut ba) = session.collect(&p.agent, &a.agent, len)?;
            bp.compute_advantages(setup.ppo.gamma, setup.ppo.gae_lambda);
            ba.compute_advantages(setup.ppo.gamma, setup.ppo.gae_lambda);
            let sp = ppo::ppo_update(&mut p, &bp, &setup.ppo)?;
            let sa = ppo::ppo_update(&mut a, &ba, &setup.ppo)?;
            consumed += len as u64;
            p.total_env_steps += len as u64;
            a.total_env_steps += len as u64;
            b.log(&p_label, n, update, consumed, &sp, LIVE);
            b.log(&a_label, n, update, consumed, &sa, LIVE);
            update += 1;
        }
        let episodes: Vec<(usize, String)> = (first_episode..session.episodes_started()).map(|e| (e, LIVE.to_string())).collect();
        b.add_audit(&p_label, n, vec![episodes.clone()]);
        b.add_audit(&a_label, n, vec![episodes]);
        let pm = b.metadata(AgentRole::Protagonist, n, p.total_env_steps, &p_label);
        let am = b.metadata(AgentRole::Adversary, n, a.total_env_steps, &a_label);
        b.record.zoo.protagonists.push(ZooEntry {
            label: p_label,
            agent: p.agent.clone(),
            metadata: pm,
        });
        b.record.zoo.adversaries.push(ZooEntry {
            label: a_label,
            agent: a.agent.clone(),
            metadata: am,
        });
    }
    Ok(b.record)
}

pub fn run_schedule(kind: ScheduleKind, setup: &TrainingSetup, observer: &mut dyn FnMut(&TrainingLogRow)) -> Result<RunRecord> {
    match kind {
        ScheduleKind::ArmsRace => arms_race_run(setup, observer),
        ScheduleKind::Ssp => ssp_run(setup, observer),
        ScheduleKind::SelfPlay => selfplay_run(setup, observer),
        ScheduleKind::ProceduralOnly => procedural_only_run(setup, observer),
    }
}

/// Pearson statistic of `counts` against a uniform distribution.
pub fn uniform_chi_square(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

/// Checks that every recorded training episode used an opponent the schedule allows.
pub fn verify_audit(kind: ScheduleKind, n_iterations: usize, audit: &[AuditRow]) -> Result<()> {
    let fail = |msg: String| Err(Error::Audit(msg));
    let mut seen: BTreeSet<(String, usize)> = BTreeSet::new();
    for row in audit {
        if row.schedule != kind.name() {
            return fail(format!("row from schedule {} in a {} run", row.schedule, kind.name()));
        }
        let n = row.iteration;
        let allowed: Vec<String> = match (kind, row.trainee.starts_with('P')) {
            (ScheduleKind::SelfPlay, _) => vec![LIVE.into()],
            (ScheduleKind::ProceduralOnly, true) => vec![PROCEDURAL.into()],
            (ScheduleKind::ArmsRace, true) if n == 0 => vec![PROCEDURAL.into()],
            (ScheduleKind::ArmsRace, true) => vec![adversary_label(n - 1)],
            (ScheduleKind::Ssp, true) => std::iter::once(PROCEDURAL.to_string()).chain((0..n).map(adversary_label)).collect(),
            (_, false) => vec![protagonist_label(n)],
        };
        if !allowed.contains(&row.opponent) {
            return fail(format!(
                "{} iteration {n} episode {} faced {}, allowed {:?}",
                row.trainee, row.episode, row.opponent, allowed
            ));
        }
        seen.insert((row.trainee.clone(), n));
    }
    let iterations = if kind == ScheduleKind::ProceduralOnly { 1 } else { n_iterations };
    for n in 0..iterations {
        let mut need = vec![protagonist_label(if kind == ScheduleKind::ProceduralOnly { 0 } else { n })];
        if kind != ScheduleKind::ProceduralOnly {
            need.push(adversary_label(n));
        }
        for t in need {
            if !seen.contains(&(t.clone(), n)) {
                return fail(format!("no training episodes recorded for {t} iteration {n}"));
            }
        }
    }
    Ok(())
}

/// How often each opponent was drawn, per (trainee, iteration).
pub fn opponent_counts(audit: &[AuditRow]) -> BTreeMap<(String, usize), BTreeMap<String, usize>> {
    let mut out: BTreeMap<(String, usize), BTreeMap<String, usize>> = BTreeMap::new();
    for r in audit {
        *out.entry((r.trainee.clone(), r.iteration)).or_default().entry(r.opponent.clone()).or_default() += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooRecord {
    pub label: String,
    pub role: AgentRole,
    pub iteration: usize,
    /// Relative to the run directory.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooManifest {
    pub schedule: ScheduleKind,
    pub protagonists: Vec<ZooRecord>,
    pub adversaries: Vec<ZooRecord>,
}

pub const ZOO_MANIFEST: &str = "zoo.json";
pub const TRAINING_LOG: &str = "training_log.csv";
pub const AUDIT_LOG: &str = "audit.csv";

impl RunRecord {
    /// Writes checkpoints, the zoo manifest, the training log and the audit
    /// log under `dir`. Fails if any target file already exists.
    pub fn write(&self, dir: &Path, meta: &ArtifactMeta) -> Result<ZooManifest> {
        let write_entries = |sub: &str, entries: &[ZooEntry]| -> Result<Vec<ZooRecord>> {
            let d = dir.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            entries
                .iter()
                .map(|e| {
                    let rel = PathBuf::from(sub).join(format!("{}.json", e.label));
                    let sha256 = e.checkpoint().save(&dir.join(&rel))?;
                    Ok(ZooRecord {
                        label: e.label.clone(),
                        role: e.metadata.role,
                        iteration: e.metadata.iteration,
                        path: rel,
                        sha256,
                    })
                })
                .collect()
        };
        let manifest = ZooManifest {
            schedule: self.kind,
            protagonists: write_entries("protagonists", &self.zoo.protagonists)?,
            adversaries: write_entries("adversaries", &self.zoo.adversaries)?,
        };
        artifact::write_json(&dir.join(ZOO_MANIFEST), meta, &manifest)?;
        artifact::write_csv(&dir.join(TRAINING_LOG), meta, &self.training_log)?;
        artifact::write_csv(&dir.join(AUDIT_LOG), meta, &self.audit)?;
        Ok(manifest)
    }
}

/// Loads and hash-checks every checkpoint of a run directory.
pub fn load_zoo(dir: &Path) -> Result<(ArtifactMeta, ZooManifest, Zoo)> {
    let (meta, manifest): (ArtifactMeta, ZooManifest) = artifact::read_json(&dir.join(ZOO_MANIFEST))?;
    let load = |records: &[ZooRecord]| -> Result<Vec<ZooEntry>> {
        records
            .iter()
            .map(|r| {
                let path = dir.join(&r.path);
                let hash = checkpoint::file_sha256(&path)?;
                if hash != r.sha256 {
                    return Err(Error::Checkpoint {
                        path,
                        reason: "content hash differs from the zoo manifest".into(),
                    });
                }
                let (agent, metadata) = checkpoint::load_agent(&path)?;
                Ok(ZooEntry {
                    label: r.label.clone(),
                    agent,
                    metadata,
                })
            })
            .collect()
    };
    let zoo = Zoo {
        protagonists: load(&manifest.protagonists)?,
        adversaries: load(&manifest.adversaries)?,
    };
    Ok((meta, manifest, zoo))
}
