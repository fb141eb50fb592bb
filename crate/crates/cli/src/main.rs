use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use yawguard::agents::{Opponent, PolicyAgent, Protagonist};
use yawguard::artifact::{self, ArtifactMeta};
use yawguard::checkpoint;
use yawguard::config::RunConfig;
use yawguard::error::{Error, Result};
use yawguard::gauntlet::{self, StandardEpisodes};
use yawguard::schedules::{self, TrainingLogRow};
use yawguard::wake::InflowCondition;

#[derive(Parser)]
#[command(name = "yawguard", version, about = "Adversarially robust wake-steering control: training, gauntlet evaluation and episode traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Overrides the master seed (train) or the evaluation seed (gauntlet, trace).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Caps the number of worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Replace a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training schedule and write its zoo, logs and audit trail.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate every protagonist against every adversary.
    Gauntlet {
        /// Run directory produced by `train`.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Defaults to the config stored in the run directory.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra protagonist checkpoint (repeatable).
        #[arg(long = "protagonist")]
        protagonists: Vec<PathBuf>,
        /// Extra adversary checkpoint (repeatable).
        #[arg(long = "adversary")]
        adversaries: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Record one deterministic episode.
    Trace {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path, `expert` or `baseline`.
        #[arg(long)]
        protagonist: String,
        /// Checkpoint path, `clean` or `procedural`.
        #[arg(long)]
        adversary: String,
        /// Free-stream speed, m/s.
        #[arg(long, default_value_t = 6.5)]
        speed: f64,
        /// Wind direction, degrees.
        #[arg(long, default_value_t = 270.0)]
        direction: f64,
        /// Also write a hub-height flow snapshot at the end of the episode.
        #[arg(long)]
        snapshot: bool,
        #[command(flatten)]
        common: Common,
    },
}

const RUN_CONFIG: &str = "config.toml";

fn set_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::InvalidInput("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    Ok(())
}

fn progress(row: &TrainingLogRow) {
    eprintln!(
        "[{} {} it {} upd {}] steps {} reward {:.4} kl {:.4}",
        row.schedule, row.trainee, row.iteration, row.update, row.env_steps, row.mean_episode_reward, row.approx_kl
    );
}

fn train(config: &Path, c: Common) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    let out = c
        .out
        .or_else(|| cfg.run.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.run.name));
    set_workers(c.workers)?;
    artifact::prepare_output_dir(&out, c.force)?;
    artifact::write_text(&out.join(RUN_CONFIG), &cfg.to_toml()?)?;

    let setup = cfg.training_setup();
    let record = schedules::run_schedule(cfg.run.schedule, &setup, &mut progress)?;
    schedules::verify_audit(cfg.run.schedule, cfg.run.n_iterations, &record.audit)?;
    let manifest = record.write(&out, &ArtifactMeta::new(cfg.hash()))?;
    eprintln!(
        "wrote {} protagonists and {} adversaries to {}",
        manifest.protagonists.len(),
        manifest.adversaries.len(),
        out.display()
    );
    Ok(())
}

fn load_config(explicit: Option<&Path>, run: Option<&Path>) -> Result<RunConfig> {
    match (explicit, run) {
        (Some(p), _) => RunConfig::load(p),
        (None, Some(r)) => RunConfig::load(&r.join(RUN_CONFIG)),
        (None, None) => Ok(RunConfig::default()),
    }
}

fn extra_agent(path: &Path) -> Result<(String, PolicyAgent)> {
    let (agent, meta) = checkpoint::load_agent(path)?;
    Ok((format!("{}:{}", meta.schedule, meta.label), agent))
}

fn run_gauntlet(
    run: Option<PathBuf>,
    config: Option<PathBuf>,
    extra_p: Vec<PathBuf>,
    extra_a: Vec<PathBuf>,
    c: Common,
) -> Result<()> {
    if run.is_none() && extra_p.is_empty() && extra_a.is_empty() {
        return Err(Error::InvalidInput("give --run or at least one --protagonist/--adversary checkpoint".into()));
    }
    let mut cfg = load_config(config.as_deref(), run.as_deref())?;
    if let Some(s) = c.seed {
        cfg.gauntlet.seed = s;
    }
    let out = match (c.out, &run) {
        (Some(o), _) => o,
        (None, Some(r)) => r.join("gauntlet"),
        (None, None) => return Err(Error::InvalidInput("--out is required without --run".into())),
    };
    set_workers(c.workers)?;

    let mut protagonists = Vec::new();
    let mut adversaries = Vec::new();
    if let Some(r) = &run {
        let (_, _, zoo) = schedules::load_zoo(r)?;
        protagonists.extend(zoo.protagonists.into_iter().map(|e| (e.label, e.agent)));
        adversaries.extend(zoo.adversaries.into_iter().map(|e| (e.label, e.agent)));
    }
    let trained_p: Vec<String> = protagonists.iter().map(|(l, _)| l.clone()).collect();
    let trained_a: Vec<String> = adversaries.iter().map(|(l, _)| l.clone()).collect();
    for p in &extra_p {
        protagonists.push(extra_agent(p)?);
    }
    for a in &extra_a {
        adversaries.push(extra_agent(a)?);
    }

    let setup = cfg.eval_setup();
    let (rows, cols) = gauntlet::standard_axes(&setup, protagonists, adversaries)?;
    let episodes = StandardEpisodes::standard(cfg.gauntlet.seed);
    let matrix = gauntlet::build_matrix(&setup, &rows, &cols, &episodes)?;
    let summary = gauntlet::summarize(&matrix, &trained_p, &trained_a)?;

    artifact::prepare_output_dir(&out, c.force)?;
    let meta = ArtifactMeta::new(cfg.hash()).with("eval_seed", cfg.gauntlet.seed);
    artifact::write_json(&out.join("matrix.json"), &meta, &matrix)?;
    artifact::write_csv(&out.join("matrix.csv"), &meta, &matrix.heatmap_rows())?;
    artifact::write_json(&out.join("summary.json"), &meta, &summary)?;
    artifact::write_csv(&out.join("summary.csv"), &meta, &summary.rows())?;
    eprintln!(
        "{} x {} matrix written to {}",
        matrix.protagonists.len(),
        matrix.adversaries.len(),
        out.display()
    );
    Ok(())
}

fn trace_protagonist(spec: &str, cfg: &RunConfig) -> Result<Protagonist> {
    Ok(match spec {
        "expert" => Protagonist::Expert(cfg.eval_setup().expert()?),
        "baseline" => Protagonist::Baseline,
        path => Protagonist::Policy(checkpoint::load_agent(Path::new(path))?.0),
    })
}

fn trace_opponent(spec: &str) -> Result<Opponent> {
    Ok(match spec {
        "clean" => Opponent::Clean,
        "procedural" => Opponent::Procedural,
        path => Opponent::Adversary(checkpoint::load_agent(Path::new(path))?.0),
    })
}

#[allow(clippy::too_many_arguments)]
fn trace(
    config: Option<PathBuf>,
    protagonist: &str,
    adversary: &str,
    speed: f64,
    direction: f64,
    snapshot: bool,
    c: Common,
) -> Result<()> {
    let cfg = load_config(config.as_deref(), None)?;
    let out = c.out.ok_or_else(|| Error::InvalidInput("trace needs --out".into()))?;
    set_workers(c.workers)?;
    let inflow = InflowCondition::new(speed, direction);
    if !cfg.env.contains(&inflow) {
        return Err(Error::InvalidInput(format!(
            "inflow ({speed}, {direction}) lies outside speed {:?} / direction {:?}",
            cfg.env.speed_bounds, cfg.env.direction_bounds
        )));
    }
    let p = trace_protagonist(protagonist, &cfg)?;
    let o = trace_opponent(adversary)?;
    let seed = c.seed.unwrap_or(cfg.gauntlet.seed);
    let setup = cfg.eval_setup();
    let (rows, env) = gauntlet::trace_episode(&setup, &p, &o, inflow, seed)?;

    artifact::prepare_output_dir(&out, c.force)?;
    let b = &cfg.noise.max_bias;
    let meta = ArtifactMeta::new(cfg.hash())
        .with("protagonist", protagonist)
        .with("adversary", adversary)
        .with("speed", speed)
        .with("direction", direction)
        .with("seed", seed)
        .with("beta_max_speed", b.speed)
        .with("beta_max_direction", b.direction)
        .with("beta_max_yaw", b.yaw)
        .with("beta_max_power", b.power);
    artifact::write_csv(&out.join("trace.csv"), &meta, &rows)?;
    if snapshot {
        let grid = gauntlet::flow_snapshot(&env, 200, 80, 3.0)?;
        artifact::write_csv(&out.join("snapshot.csv"), &meta, &grid)?;
    }
    eprintln!("{} trace rows written to {}", rows.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train { config, common } => train(&config, common),
        Command::Gauntlet {
            run,
            config,
            protagonists,
            adversaries,
            common,
        } => run_gauntlet(run, config, protagonists, adversaries, common),
        Command::Trace {
            config,
            protagonist,
            adversary,
            speed,
            direction,
            snapshot,
            common,
        } => trace(config, &protagonist, &adversary, speed, direction, snapshot, common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
