use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use yawguard::artifact;
use yawguard::gauntlet::{HeatmapRow, Summary, SummaryRow, TraceRow};
use yawguard::noise::NoiseBounds;
use yawguard::schedules::ZooManifest;

const TINY: &str = r#"
[run]
name = "tiny"
schedule = "arms_race"
n_iterations = 2
seed = 11

[ppo]
steps_per_iteration = 128
rollout_length = 64
n_envs = 2
update_epochs = 1
selfplay_rollout_length = 128

[network]
hidden = [8]
"#;

fn yawguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yawguard"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn train_tiny(dir: &Path, out: &str) -> PathBuf {
    let cfg = write_config(dir, "tiny.toml", TINY);
    let run = dir.join(out);
    let o = yawguard(&["train", "--config", s(&cfg), "--out", s(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    run
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&yawguard(&["--help"])), 0);
    assert_eq!(code(&yawguard(&["--version"])), 0);
    assert_eq!(code(&yawguard(&["train", "--help"])), 0);
}

#[test]
fn bad_arguments_are_user_errors() {
    assert_eq!(code(&yawguard(&[])), 1);
    assert_eq!(code(&yawguard(&["fly"])), 1);
    assert_eq!(code(&yawguard(&["train"])), 1);
    assert_eq!(code(&yawguard(&["train", "--config", "/nonexistent/x.toml"])), 1);
}

#[test]
fn missing_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[run]\nname = \"x\"\nschedule = \"ssp\"\nn_iterations = 1\n");
    let o = yawguard(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "typo.toml", &format!("{TINY}[env]\nhistory_lenght = 3\n"));
    let o = yawguard(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("history_lenght"), "{}", stderr(&o));
}

#[test]
fn train_writes_zoo_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tiny(dir.path(), "a");
    let b = train_tiny(dir.path(), "b");
    let (meta, ma): (_, ZooManifest) = artifact::read_json(&a.join("zoo.json")).unwrap();
    let (_, mb): (_, ZooManifest) = artifact::read_json(&b.join("zoo.json")).unwrap();
    assert_eq!(ma.protagonists.len(), 2);
    assert_eq!(ma.adversaries.len(), 2);
    assert_eq!(ma, mb, "same config and seed give identical checkpoint hashes");
    assert_eq!(meta.tool_version, env!("CARGO_PKG_VERSION"));
    assert!(a.join("config.toml").exists());
    assert!(a.join("training_log.csv").exists());
    assert!(a.join("audit.csv").exists());

    let cfg = dir.path().join("tiny.toml");
    let o = yawguard(&["train", "--config", s(&cfg), "--out", s(&a)]);
    assert_eq!(code(&o), 1, "non-empty output without --force");
    assert!(stderr(&o).contains("--force"));
    let o = yawguard(&["train", "--config", s(&cfg), "--out", s(&a), "--seed", "12", "--force"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, mc): (_, ZooManifest) = artifact::read_json(&a.join("zoo.json")).unwrap();
    assert_ne!(mc, mb, "a different seed gives different checkpoints");
}

#[test]
fn gauntlet_and_trace_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_tiny(dir.path(), "run");

    let o = yawguard(&["gauntlet", "--run", s(&run), "--workers", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = run.join("gauntlet");
    let (meta, cells): (_, Vec<HeatmapRow>) = artifact::read_csv(&g.join("matrix.csv")).unwrap();
    assert_eq!(cells.len(), 16, "(2 + Expert + Baseline) x (2 + Clean + Procedural)");
    assert_eq!(meta.get("eval_seed"), Some("2024"));
    for c in cells.iter().filter(|c| c.protagonist == "Baseline") {
        assert_eq!(c.mean, 0.0);
    }
    let (_, rows): (_, Vec<SummaryRow>) = artifact::read_csv(&g.join("summary.csv")).unwrap();
    let mut series: Vec<&str> = rows.iter().map(|r| r.series.as_str()).collect();
    series.dedup();
    assert_eq!(series.len(), 6);
    let (_, summary): (_, Summary) = artifact::read_json(&g.join("summary.json")).unwrap();
    assert_eq!(summary.diagonal.len(), 2);
    let bytes = fs::read(g.join("matrix.csv")).unwrap();
    let o = yawguard(&["gauntlet", "--run", s(&run)]);
    assert_eq!(code(&o), 1, "refuses to overwrite");
    let o = yawguard(&["gauntlet", "--run", s(&run), "--force"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(g.join("matrix.csv")).unwrap(), bytes, "gauntlet reruns are identical");

    // explicit checkpoint lists
    let p0 = run.join("protagonists/P0.json");
    let a1 = run.join("adversaries/A1.json");
    let out = dir.path().join("cross");
    let o = yawguard(&["gauntlet", "--protagonist", s(&p0), "--adversary", s(&a1), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, cells): (_, Vec<HeatmapRow>) = artifact::read_csv(&out.join("matrix.csv")).unwrap();
    assert_eq!(cells.len(), 9);
    assert!(cells.iter().any(|c| c.protagonist == "arms_race:P0" && c.adversary == "arms_race:A1"));

    let cfg = run.join("config.toml");
    let trace = |p: &str, a: &str, name: &str, extra: &[&str]| -> Vec<TraceRow> {
        let out = dir.path().join(name);
        let mut args = vec!["trace", "--config", s(&cfg), "--protagonist", p, "--adversary", a, "--out", s(&out)];
        args.extend_from_slice(extra);
        let o = yawguard(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let (meta, rows) = artifact::read_csv(&out.join("trace.csv")).unwrap();
        assert_eq!(meta.get("beta_max_direction"), Some("10"));
        rows
    };

    let rows = trace("baseline", "clean", "t0", &["--snapshot"]);
    assert_eq!(rows.len(), 400);
    assert!(rows.iter().all(|r| r.reward == 0.0));
    assert!(rows.iter().all(|r| r.sensed_direction == r.true_direction && r.sensed_power == r.true_power));
    assert!(dir.path().join("t0/snapshot.csv").exists());

    let b = NoiseBounds::default().max_bias;
    let within = |rows: &[TraceRow]| {
        rows.iter().all(|r| {
            r.eps_speed.abs() <= b.speed
                && r.eps_direction.abs() <= b.direction
                && r.eps_yaw.abs() <= b.yaw
                && r.eps_power.abs() <= b.power
        })
    };
    let rows = trace(s(&p0), s(&a1), "t1", &["--speed", "6.2", "--direction", "268"]);
    assert!(within(&rows));
    // procedural ε = η + β with Gaussian η, so only the η-free channels are bounded
    let rows = trace("expert", "procedural", "t2", &[]);
    assert!(rows.iter().any(|r| r.eps_direction != 0.0));
    for t in 0..2 {
        let mine: Vec<&TraceRow> = rows.iter().filter(|r| r.turbine == t).collect();
        assert!(mine.iter().all(|r| r.eps_yaw == mine[0].eps_yaw && r.eps_power == mine[0].eps_power));
        assert!(mine[0].eps_yaw.abs() <= b.yaw && mine[0].eps_power.abs() <= b.power);
    }

    let out = dir.path().join("t3");
    let o = yawguard(&["trace", "--protagonist", "baseline", "--adversary", "clean", "--speed", "12", "--out", s(&out)]);
    assert_eq!(code(&o), 1, "inflow outside the configured bounds");
}

#[test]
fn unreadable_checkpoint_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", "{\"format\": \"other\"}");
    let o = yawguard(&["gauntlet", "--protagonist", s(&bad), "--out", s(&dir.path().join("g"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bad.json"), "{}", stderr(&o));
}
