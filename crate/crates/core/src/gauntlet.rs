//! Every protagonist against every adversary over fixed inflow episodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{ExpertAgent, ExpertConfig, Opponent, OpponentState, PolicyAgent, Protagonist};
use crate::env::{EnvConfig, FarmEnv, RewardSample};
use crate::error::{Error, Result};
use crate::noise::NoiseBounds;
use crate::seed::{self, tag};
use crate::signals::{Frame, Signals};
use crate::wake::{FarmLayout, InflowCondition, WakeModel};

pub const EXPERT: &str = "Expert";
pub const BASELINE: &str = "Baseline";
pub const CLEAN: &str = "Clean";
pub const PROCEDURAL: &str = "Procedural";

/// Everything needed to build evaluation environments.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSetup {
    pub env: EnvConfig,
    pub layout: FarmLayout,
    pub model: WakeModel,
    pub noise: NoiseBounds,
    pub expert: ExpertConfig,
}

impl Default for EvalSetup {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            layout: FarmLayout::default(),
            model: WakeModel::default(),
            noise: NoiseBounds::default(),
            expert: ExpertConfig::default(),
        }
    }
}

impl EvalSetup {
    pub fn make_env(&self) -> Result<FarmEnv> {
        FarmEnv::new(self.env.clone(), self.layout.clone(), self.model.clone())
    }

    pub fn expert(&self) -> Result<ExpertAgent> {
        ExpertAgent::new(&self.expert, &self.make_env()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardEpisode {
    pub inflow: InflowCondition,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardEpisodes {
    pub version: u32,
    pub episodes: Vec<StandardEpisode>,
}

impl StandardEpisodes {
    pub const VERSION: u32 = 1;

    /// Corners and centre of the default inflow box.
    pub fn standard(eval_seed: u64) -> Self {
        let conditions = [(6.0, 267.0), (6.25, 268.5), (6.5, 270.0), (6.75, 271.5), (7.0, 273.0)];
        Self {
            version: Self::VERSION,
            episodes: conditions
                .iter()
                .enumerate()
                .map(|(i, &(u, d))| StandardEpisode {
                    inflow: InflowCondition::new(u, d),
                    seed: seed::derive_seed(eval_seed, &[tag::EVAL, i as u64]),
                })
                .collect(),
        }
    }
}

/// What one control step looked like, for tracing.
#[derive(Debug, Clone)]
pub struct StepRecord<'a> {
    /// 1-based index of the completed control step.
    pub step: usize,
    pub true_frame: &'a Frame,
    pub sensed_frame: &'a Frame,
    pub errors: &'a [Signals],
    pub yaw: &'a [f64],
    pub reward: RewardSample,
}

/// Plays one full episode and returns the reward of every step.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    env: &mut FarmEnv,
    protagonist: &Protagonist,
    opponent: &Opponent,
    bounds: &NoiseBounds,
    inflow: InflowCondition,
    episode_seed: u64,
    deterministic: bool,
    mut observe: impl FnMut(&StepRecord<'_>),
) -> Result<Vec<RewardSample>> {
    let mut rng = seed::stream(episode_seed, &[]);
    let n = env.n_turbines();
    let include = env.config().adversary_observes_error;
    let mut state = OpponentState::start(opponent, bounds, n, &mut rng);
    let initial = state.initial_errors(bounds, &mut rng);
    let first = env.reset_with_errors(Some(inflow), &initial, &mut rng)?;
    let mut true_obs = first.true_obs;
    let mut sensed_obs = first.sensed_obs;
    let mut rewards = Vec::with_capacity(env.episode_steps());
    while !env.is_done() {
        // protagonist sees only sensed data, the adversary only true data
        let delta = protagonist.act(&sensed_obs, env.physical_yaw()?, &mut rng, deterministic)?;
        let errors = state.next_errors(opponent, &true_obs, bounds, include, &mut rng, deterministic)?;
        let out = env.step(&delta, &errors)?;
        rewards.push(out.reward);
        observe(&StepRecord {
            step: env.step_index(),
            true_frame: env.current_true_frame()?,
            sensed_frame: env.current_sensed_frame()?,
            errors: &errors,
            yaw: env.physical_yaw()?,
            reward: out.reward,
        });
        true_obs = out.true_obs;
        sensed_obs = out.sensed_obs;
    }
    Ok(rewards)
}

pub fn episode_score(rewards: &[RewardSample]) -> f64 {
    rewards.iter().map(|r| r.reward).sum::<f64>() / rewards.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub mean: f64,
    /// Sample standard deviation over √n.
    pub se: f64,
    pub scores: Vec<f64>,
}

impl EvalCell {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let se = if scores.len() > 1 {
            let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt() / n.sqrt()
        } else {
            0.0
        };
        Self { mean, se, scores }
    }
}

/// Deterministic evaluation of one pairing over all standard episodes.
pub fn evaluate_pair(setup: &EvalSetup, protagonist: &Protagonist, opponent: &Opponent, episodes: &StandardEpisodes) -> Result<EvalCell> {
    let mut env = setup.make_env()?;
    let mut scores = Vec::with_capacity(episodes.episodes.len());
    for ep in &episodes.episodes {
        let r = run_episode(&mut env, protagonist, opponent, &setup.noise, ep.inflow, ep.seed, true, |_| {})?;
        scores.push(episode_score(&r));
    }
    Ok(EvalCell::from_scores(scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    pub protagonists: Vec<String>,
    pub adversaries: Vec<String>,
    /// `cells[i][j]`: protagonist i against adversary j.
    pub cells: Vec<Vec<EvalCell>>,
    pub episodes: StandardEpisodes,
}

impl EvalMatrix {
    pub fn protagonist_index(&self, label: &str) -> Result<usize> {
        self.protagonists
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::InvalidInput(format!("no protagonist labelled {label:?}")))
    }

    pub fn adversary_index(&self, label: &str) -> Result<usize> {
        self.adversaries
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::InvalidInput(format!("no adversary labelled {label:?}")))
    }

    pub fn cell(&self, protagonist: &str, adversary: &str) -> Result<&EvalCell> {
        Ok(&self.cells[self.protagonist_index(protagonist)?][self.adversary_index(adversary)?])
    }

    pub fn heatmap_rows(&self) -> Vec<HeatmapRow> {
        let mut rows = Vec::new();
        for (i, p) in self.protagonists.iter().enumerate() {
            for (j, a) in self.adversaries.iter().enumerate() {
                let c = &self.cells[i][j];
                rows.push(HeatmapRow {
                    protagonist: p.clone(),
                    adversary: a.clone(),
                    mean: c.mean,
                    se: c.se,
                });
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub protagonist: String,
    pub adversary: String,
    pub mean: f64,
    pub se: f64,
}

/// Evaluates every cell (in parallel) and assembles the matrix in axis order.
pub fn build_matrix(
    setup: &EvalSetup,
    protagonists: &[(String, Protagonist)],
    adversaries: &[(String, Opponent)],
    episodes: &StandardEpisodes,
) -> Result<EvalMatrix> {
    if protagonists.is_empty() || adversaries.is_empty() {
        return Err(Error::InvalidInput("gauntlet axes must be non-empty".into()));
    }
    let na = adversaries.len();
    let flat = (0..protagonists.len() * na)
        .into_par_iter()
        .map(|k| evaluate_pair(setup, &protagonists[k / na].1, &adversaries[k % na].1, episodes))
        .collect::<Result<Vec<_>>>()?;
    let cells = flat.chunks(na).map(|r| r.to_vec()).collect();
    Ok(EvalMatrix {
        protagonists: protagonists.iter().map(|(l, _)| l.clone()).collect(),
        adversaries: adversaries.iter().map(|(l, _)| l.clone()).collect(),
        cells,
        episodes: episodes.clone(),
    })
}

pub type ProtagonistAxis = Vec<(String, Protagonist)>;
pub type AdversaryAxis = Vec<(String, Opponent)>;

/// Trained protagonists plus Expert and Baseline rows; trained adversaries
/// plus Clean and Procedural columns.
pub fn standard_axes(
    setup: &EvalSetup,
    protagonists: Vec<(String, PolicyAgent)>,
    adversaries: Vec<(String, PolicyAgent)>,
) -> Result<(ProtagonistAxis, AdversaryAxis)> {
    let mut rows: ProtagonistAxis = protagonists.into_iter().map(|(l, a)| (l, Protagonist::Policy(a))).collect();
    rows.push((EXPERT.into(), Protagonist::Expert(setup.expert()?)));
    rows.push((BASELINE.into(), Protagonist::Baseline));
    let mut cols: AdversaryAxis = adversaries.into_iter().map(|(l, a)| (l, Opponent::Adversary(a))).collect();
    cols.push((CLEAN.into(), Opponent::Clean));
    cols.push((PROCEDURAL.into(), Opponent::Procedural));
    Ok((rows, cols))
}

/// The per-method summary curves over trained iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub protagonists: Vec<String>,
    pub adversaries: Vec<String>,
    /// Protagonist n against adversary n.
    pub diagonal: Vec<f64>,
    /// Expert against adversary n.
    pub expert_vs_adversary: Vec<f64>,
    pub protagonist_vs_clean: Vec<f64>,
    pub protagonist_vs_procedural: Vec<f64>,
    /// Protagonist n averaged over the trained adversaries.
    pub protagonist_mean: Vec<f64>,
    /// Adversary n averaged over the trained protagonists.
    pub adversary_mean: Vec<f64>,
    pub most_robust_protagonist: Option<usize>,
    pub most_formidable_adversary: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub series: String,
    pub index: usize,
    pub label: String,
    pub value: f64,
}

fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}

fn argmin(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| x < v[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn summarize(matrix: &EvalMatrix, trained_protagonists: &[String], trained_adversaries: &[String]) -> Result<Summary> {
    let pi: Vec<usize> = trained_protagonists.iter().map(|l| matrix.protagonist_index(l)).collect::<Result<_>>()?;
    let ai: Vec<usize> = trained_adversaries.iter().map(|l| matrix.adversary_index(l)).collect::<Result<_>>()?;
    let m = |i: usize, j: usize| matrix.cells[i][j].mean;
    let mean_of = |v: Vec<f64>| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };

    let diagonal = pi.iter().zip(&ai).map(|(&i, &j)| m(i, j)).collect();
    let expert_vs_adversary = match matrix.protagonist_index(EXPERT) {
        Ok(e) => ai.iter().map(|&j| m(e, j)).collect(),
        Err(_) => Vec::new(),
    };
    let column = |label: &str| -> Vec<f64> {
        match matrix.adversary_index(label) {
            Ok(j) => pi.iter().map(|&i| m(i, j)).collect(),
            Err(_) => Vec::new(),
        }
    };
    let protagonist_mean: Vec<f64> = pi.iter().map(|&i| mean_of(ai.iter().map(|&j| m(i, j)).collect())).collect();
    let adversary_mean: Vec<f64> = ai.iter().map(|&j| mean_of(pi.iter().map(|&i| m(i, j)).collect())).collect();
    Ok(Summary {
        protagonists: trained_protagonists.to_vec(),
        adversaries: trained_adversaries.to_vec(),
        diagonal,
        expert_vs_adversary,
        protagonist_vs_clean: column(CLEAN),
        protagonist_vs_procedural: column(PROCEDURAL),
        most_robust_protagonist: if ai.is_empty() { None } else { argmax(&protagonist_mean) },
        most_formidable_adversary: if pi.is_empty() { None } else { argmin(&adversary_mean) },
        protagonist_mean,
        adversary_mean,
    })
}

impl Summary {
    pub fn rows(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        let mut push = |series: &str, labels: &[String], values: &[f64]| {
            for (i, &v) in values.iter().enumerate() {
                rows.push(SummaryRow {
                    series: series.into(),
                    index: i,
                    label: labels.get(i).cloned().unwrap_or_default(),
                    value: v,
                });
            }
        };
        push("diagonal", &self.protagonists, &self.diagonal);
        push("expert_vs_adversary", &self.adversaries, &self.expert_vs_adversary);
        push("protagonist_vs_clean", &self.protagonists, &self.protagonist_vs_clean);
        push("protagonist_vs_procedural", &self.protagonists, &self.protagonist_vs_procedural);
        push("protagonist_mean", &self.protagonists, &self.protagonist_mean);
        push("adversary_mean", &self.adversaries, &self.adversary_mean);
        rows
    }
}

/// The most robust protagonist and most formidable adversary of one training
/// method, picked from that method's own gauntlet summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodChampions {
    pub method: String,
    pub protagonist: Option<(String, PolicyAgent)>,
    pub adversary: Option<(String, PolicyAgent)>,
}

pub fn pick_champions(
    method: &str,
    summary: &Summary,
    protagonists: &[(String, PolicyAgent)],
    adversaries: &[(String, PolicyAgent)],
) -> Result<MethodChampions> {
    let find = |pool: &[(String, PolicyAgent)], label: &str| {
        pool.iter()
            .find(|(l, _)| l == label)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("{method}: no agent labelled {label:?}")))
    };
    let protagonist = match summary.most_robust_protagonist {
        Some(i) => Some(find(protagonists, &summary.protagonists[i])?),
        None => None,
    };
    let adversary = match summary.most_formidable_adversary {
        Some(j) => Some(find(adversaries, &summary.adversaries[j])?),
        None => None,
    };
    Ok(MethodChampions {
        method: method.into(),
        protagonist,
        adversary,
    })
}

/// Label of an agent in a cross-method matrix.
pub fn cross_label(method: &str, label: &str) -> String {
    format!("{method}:{label}")
}

/// Champions of every method against each other, plus any further
/// protagonists (e.g. one trained on procedural noise only) and the standard
/// Expert/Baseline rows and Clean/Procedural columns.
pub fn cross_comparison(
    setup: &EvalSetup,
    champions: &[MethodChampions],
    extra_protagonists: Vec<(String, PolicyAgent)>,
    episodes: &StandardEpisodes,
) -> Result<EvalMatrix> {
    let mut prots = Vec::new();
    let mut advs = Vec::new();
    for c in champions {
        if let Some((l, a)) = &c.protagonist {
            prots.push((cross_label(&c.method, l), a.clone()));
        }
        if let Some((l, a)) = &c.adversary {
            advs.push((cross_label(&c.method, l), a.clone()));
        }
    }
    prots.extend(extra_protagonists);
    let (rows, cols) = standard_axes(setup, prots, advs)?;
    build_matrix(setup, &rows, &cols, episodes)
}

impl EvalMatrix {
    /// Lowest cell mean of `protagonist` over the given adversary columns.
    pub fn worst_case(&self, protagonist: &str, adversaries: &[String]) -> Result<f64> {
        if adversaries.is_empty() {
            return Err(Error::InvalidInput("worst case over an empty adversary set".into()));
        }
        adversaries
            .iter()
            .map(|a| self.cell(protagonist, a).map(|c| c.mean))
            .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
    }
}

/// One turbine at one control step of a traced episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub turbine: usize,
    pub true_speed: f64,
    pub sensed_speed: f64,
    pub true_direction: f64,
    pub sensed_direction: f64,
    pub true_yaw: f64,
    pub sensed_yaw: f64,
    pub true_power: f64,
    pub sensed_power: f64,
    pub eps_speed: f64,
    pub eps_direction: f64,
    pub eps_yaw: f64,
    pub eps_power: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

/// Runs one deterministic episode and records every turbine at every step.
/// Returns the rows and the environment in its final state.
pub fn trace_episode(
    setup: &EvalSetup,
    protagonist: &Protagonist,
    opponent: &Opponent,
    inflow: InflowCondition,
    episode_seed: u64,
) -> Result<(Vec<TraceRow>, FarmEnv)> {
    let mut env = setup.make_env()?;
    let mut rows = Vec::new();
    run_episode(&mut env, protagonist, opponent, &setup.noise, inflow, episode_seed, true, |rec| {
        for (i, (t, s)) in rec.true_frame.iter().zip(rec.sensed_frame).enumerate() {
            let e = rec.errors[i];
            rows.push(TraceRow {
                step: rec.step,
                turbine: i,
                true_speed: t.speed,
                sensed_speed: s.speed,
                true_direction: t.direction,
                sensed_direction: s.direction,
                true_yaw: t.yaw,
                sensed_yaw: s.yaw,
                true_power: t.power,
                sensed_power: s.power,
                eps_speed: e.speed,
                eps_direction: e.direction,
                eps_yaw: e.yaw,
                eps_power: e.power,
                reward: rec.reward.reward,
            });
        }
    })?;
    Ok((rows, env))
}

/// Hub-height speed on a regular grid spanning the farm with a margin of
/// `margin_diameters` rotor diameters, from the current wake state.
pub fn flow_snapshot(env: &FarmEnv, nx: usize, ny: usize, margin_diameters: f64) -> Result<Vec<SnapshotRow>> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidInput("snapshot grid needs at least 2 points per axis".into()));
    }
    let layout = env.layout();
    let d = layout.turbines.iter().map(|t| t.rotor_diameter).fold(0.0, f64::max);
    let m = margin_diameters * d;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &layout.positions {
        x0 = x0.min(p[0] - m);
        x1 = x1.max(p[0] + m);
        y0 = y0.min(p[1] - m);
        y1 = y1.max(p[1] + m);
    }
    let points: Vec<[f64; 2]> = (0..ny)
        .flat_map(|j| {
            (0..nx).map(move |i| {
                [
                    x0 + (x1 - x0) * i as f64 / (nx - 1) as f64,
                    y0 + (y1 - y0) * j as f64 / (ny - 1) as f64,
                ]
            })
        })
        .collect();
    let speeds = env.wake_state()?.flow_field_snapshot(layout, env.model(), &env.inflow()?, &points);
    Ok(points
        .iter()
        .zip(speeds)
        .map(|(p, speed)| SnapshotRow { x: p[0], y: p[1], speed })
        .collect())
}
