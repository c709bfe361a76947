//! Command-line entry point: train, eval, rollout, ablate and export.

use affdrive::ablation::{ablate, comparison_csv, comparison_rows, full_wins, AblationSpec};
use affdrive::affordance::OBS_DIM;
use affdrive::bevgrid::export_frame;
use affdrive::config::RunConfig;
use affdrive::env::Env;
use affdrive::eval::{benchmark, fixed_routes, run_episode, write_benchmark, BenchmarkSpec, Deterministic, TRACE_VERSION};
use affdrive::learner::checkpoint::FORMAT_VERSION;
use affdrive::learner::{
    load_checkpoint, policy_act, save_checkpoint, train::write_curve_csv, ActMode, CurveRow, SacLearner, Trainer,
};
use affdrive::reward::RewardPreset;
use affdrive::rng::stream;
use affdrive::scenario::RouteRequest;
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "affdrive", version, about = "Affordance-space driving micro-simulator and SAC trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to AFFDRIVE_OUT, then the config, then `runs/<command>`.
    #[arg(long, env = "AFFDRIVE_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a SAC agent on the micro-simulator.
    Train {
        #[command(flatten)]
        common: Common,
        /// Environment steps; defaults to `sac.total_steps`.
        #[arg(long)]
        steps: Option<u64>,
        /// Write an intermediate checkpoint every this many steps (0 disables).
        #[arg(long, default_value_t = 50_000)]
        checkpoint_every: u64,
        /// Reward preset overriding the configured toggles.
        #[arg(long)]
        preset: Option<RewardPreset>,
    },
    /// Run the fixed-route benchmark with a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON list of `{"start": i, "goal": j}` spawn-point pairs.
        #[arg(long)]
        routes: Option<PathBuf>,
        /// Repetitions per route; defaults to `eval.repetitions`.
        #[arg(long)]
        reps: Option<usize>,
        /// Worker threads; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Record a single episode trace.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Spawn-point index of the route start (requires --goal).
        #[arg(long, requires = "goal")]
        start: Option<usize>,
        /// Spawn-point index of the route goal (requires --start).
        #[arg(long, requires = "start")]
        goal: Option<usize>,
        /// Sample from the stochastic policy instead of its mean.
        #[arg(long)]
        stochastic: bool,
    },
    /// Train and benchmark `full` against a sparse preset.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Sparse variant compared against `full`.
        #[arg(long, default_value = "fully-sparse")]
        preset: RewardPreset,
        /// Comma-separated training seeds.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        /// Training steps per agent; defaults to `sac.total_steps`.
        #[arg(long)]
        steps: Option<u64>,
        /// Repetitions per route; defaults to `eval.repetitions`.
        #[arg(long)]
        reps: Option<usize>,
        /// Worker threads; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Exit with code 4 unless `full` wins on both route completion and return.
        #[arg(long)]
        check: bool,
    },
    /// Dump BEV frames along a rollout.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Export every n-th step.
        #[arg(long, default_value_t = 10)]
        every: u64,
        /// Stop after this many frames.
        #[arg(long, default_value_t = 100)]
        max_frames: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Rollout { .. } => "rollout",
            Command::Ablate { .. } => "ablate",
            Command::Export { .. } => "export",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Rollout { common, .. }
            | Command::Ablate { common, .. }
            | Command::Export { common, .. } => common,
        }
    }
}

/// Signals a failed acceptance check rather than an error.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

struct Run {
    cfg: RunConfig,
    hash: String,
    out: PathBuf,
}

fn prepare(cmd: &Command, preset: Option<RewardPreset>) -> anyhow::Result<Run> {
    let c = cmd.common();
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if preset.is_some() {
        cfg.preset = preset;
    }
    cfg.validate()?;
    let out = c.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| Path::new("runs").join(cmd.name()));
    std::fs::create_dir_all(&out).map_err(|e| affdrive::Error::io(&out, e))?;
    let hash = cfg.hash();
    Ok(Run { cfg, hash, out })
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).map_err(|e| affdrive::Error::io(path, e))?;
    Ok(())
}

fn write_manifest(run: &Run, command: &str, extra: serde_json::Value) -> anyhow::Result<()> {
    let manifest = json!({
        "command": command,
        "argv": std::env::args().collect::<Vec<_>>(),
        "config_hash": run.hash,
        "seed": run.cfg.seed,
        "versions": {
            "affdrive": env!("CARGO_PKG_VERSION"),
            "checkpoint_format": FORMAT_VERSION,
            "trace_format": TRACE_VERSION,
        },
        "config": run.cfg,
        "details": extra,
    });
    write_file(&run.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

fn load_learner(path: &Path) -> anyhow::Result<SacLearner> {
    let l = load_checkpoint(path)?;
    l.check_dims(OBS_DIM, 2)?;
    Ok(l)
}

fn cmd_train(run: &Run, steps: Option<u64>, every: u64) -> anyhow::Result<()> {
    let steps = steps.unwrap_or(run.cfg.sac.total_steps);
    let mut env = Env::new(run.cfg.env_config())?;
    let mut learner = SacLearner::new(OBS_DIM, 2, run.cfg.sac.clone(), run.cfg.seed)?;
    learner.config_hash = run.hash.clone();
    let mut trainer = Trainer::new(&env, &learner, run.cfg.seed)?;
    let ckdir = run.out.join("checkpoints");
    std::fs::create_dir_all(&ckdir).map_err(|e| affdrive::Error::io(&ckdir, e))?;
    let chunk = if every == 0 { steps.max(1) } else { every };
    let mut curve: Vec<CurveRow> = Vec::new();
    let mut done = 0;
    while done < steps {
        let n = chunk.min(steps - done);
        curve.extend(trainer.run(&mut env, &mut learner, n, |_| {})?);
        done += n;
        if every > 0 {
            save_checkpoint(&learner, &ckdir.join(format!("step_{done:09}.bin")))?;
        }
        write_curve_csv(&run.out.join("curve.csv"), &curve)?;
        let tail = &curve[curve.len().saturating_sub(20)..];
        let mean = tail.iter().map(|r| r.episode_return).sum::<f64>() / tail.len().max(1) as f64;
        eprintln!("step {done}/{steps}: episodes {} recent return {mean:.2} alpha {:.4}", curve.len(), learner.alpha());
    }
    let final_path = run.out.join("checkpoint.bin");
    save_checkpoint(&learner, &final_path)?;
    write_manifest(run, "train", json!({ "steps": steps, "episodes": curve.len(), "checkpoint": final_path }))?;
    println!("{}", final_path.display());
    Ok(())
}

fn bench_spec(run: &Run, routes_file: Option<&Path>, reps: Option<usize>, jobs: usize) -> anyhow::Result<BenchmarkSpec> {
    let ev = &run.cfg.eval;
    let routes: Vec<RouteRequest> = match (routes_file, &ev.route_list) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| affdrive::Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| affdrive::Error::config("routes", e.to_string()))?
        }
        (None, Some(l)) => l.clone(),
        (None, None) => fixed_routes(&run.cfg.env_config(), ev.routes, ev.seed)?,
    };
    if routes.is_empty() {
        return Err(affdrive::Error::config("routes", "must not be empty").into());
    }
    let repetitions = reps.unwrap_or(ev.repetitions);
    if repetitions == 0 {
        return Err(affdrive::Error::config("reps", "must be >= 1").into());
    }
    Ok(BenchmarkSpec { routes, repetitions, seed: ev.seed, jobs })
}

fn cmd_eval(run: &Run, ckpt: &Path, routes: Option<&Path>, reps: Option<usize>, jobs: usize) -> anyhow::Result<()> {
    let learner = load_learner(ckpt)?;
    let spec = bench_spec(run, routes, reps, jobs)?;
    let res = benchmark(&run.cfg.env_config(), &learner, &spec, &run.hash)?;
    let csv = write_benchmark(&run.out, &res)?;
    write_manifest(
        run,
        "eval",
        json!({ "checkpoint": ckpt, "checkpoint_config_hash": learner.config_hash, "benchmark": spec, "report": res.report }),
    )?;
    let r = &res.report;
    println!(
        "episodes {} RC {:.3} AS {:.2} TD {:.1} CR {:.3} CS {:.2} DPV {:.1} return {:.2}",
        r.episodes,
        r.route_completion.mean,
        r.average_speed.mean,
        r.distance.mean,
        r.collision_rate.mean,
        r.collision_speed.mean,
        r.dpv.mean,
        r.episode_return.mean
    );
    println!("{}", csv.display());
    Ok(())
}

fn cmd_rollout(run: &Run, ckpt: &Path, route: Option<RouteRequest>, stochastic: bool) -> anyhow::Result<()> {
    let learner = load_learner(ckpt)?;
    let mut cfg = run.cfg.env_config();
    if route.is_some() {
        cfg.scenario.route = route;
    }
    let mut env = Env::new(cfg)?;
    let trace = if stochastic {
        let mut rng = stream(run.cfg.seed, "rollout-policy");
        let mut policy = |obs: &affdrive::affordance::Observation, _: &affdrive::scenario::WorldState| {
            let (a, _) = policy_act(&learner.actor, &obs.0, ActMode::Stochastic, &mut rng).expect("finite policy");
            affdrive::env::Action::new(a[0], a[1])
        };
        run_episode(&mut env, &mut policy, run.cfg.seed, 0, 0, &run.hash)?
    } else {
        run_episode(&mut env, &mut Deterministic(&learner), run.cfg.seed, 0, 0, &run.hash)?
    };
    let path = run.out.join("trace.jsonl");
    trace.save(&path)?;
    write_manifest(run, "rollout", json!({ "checkpoint": ckpt, "route": route, "stochastic": stochastic }))?;
    println!(
        "steps {} return {:.2} end {}",
        trace.steps.len(),
        trace.total_return(),
        trace.end_reason().map_or("none", |e| e.name())
    );
    println!("{}", path.display());
    Ok(())
}

fn cmd_ablate(
    run: &Run,
    variant: RewardPreset,
    seeds: Vec<u64>,
    steps: Option<u64>,
    reps: Option<usize>,
    jobs: usize,
    check: bool,
) -> anyhow::Result<()> {
    let spec = AblationSpec {
        variant,
        seeds,
        steps: steps.unwrap_or(run.cfg.sac.total_steps),
        bench: bench_spec(run, None, reps, jobs)?,
    };
    let runs = ablate(&run.cfg.env_config(), &run.cfg.sac, &spec, &run.hash)?;
    for r in &runs {
        let dir = run.out.join(format!("{}_seed{}", r.preset.name(), r.seed));
        std::fs::create_dir_all(&dir).map_err(|e| affdrive::Error::io(&dir, e))?;
        save_checkpoint(&r.learner, &dir.join("checkpoint.bin"))?;
        write_curve_csv(&dir.join("curve.csv"), &r.curve)?;
        write_benchmark(&dir, &r.result)?;
    }
    let rows = comparison_rows(&runs);
    let path = run.out.join("comparison.csv");
    write_file(&path, &comparison_csv(&rows)?)?;
    let wins = full_wins(&rows, variant);
    write_manifest(run, "ablate", json!({ "spec": spec, "full_wins": wins }))?;
    for r in rows.iter().filter(|r| r.seed == "mean") {
        println!("{:<13} RC {:.3} return {:.2}", r.preset, r.route_completion, r.episode_return);
    }
    println!("{}", path.display());
    if check && !wins {
        bail!(CheckFailed(format!("`full` did not beat `{variant}` on both route completion and return")));
    }
    Ok(())
}

fn cmd_export(run: &Run, ckpt: &Path, every: u64, max_frames: usize) -> anyhow::Result<()> {
    let learner = load_learner(ckpt)?;
    let mut env = Env::new(run.cfg.env_config())?;
    let dir = run.out.join("frames");
    std::fs::create_dir_all(&dir).map_err(|e| affdrive::Error::io(&dir, e))?;
    let mut obs = env.reset(run.cfg.seed)?;
    let mut rng = stream(run.cfg.seed, "export");
    let every = every.max(1);
    let mut frames = 0;
    loop {
        let w = env.world().context("environment has no world after reset")?;
        if frames < max_frames && w.t_step % every == 0 {
            export_frame(w, &run.cfg.bev, &dir.join(format!("frame_{:06}.bin", w.t_step)))?;
            frames += 1;
        }
        if frames >= max_frames {
            break;
        }
        let (a, _) = learner.act(&obs.0, ActMode::Deterministic, &mut rng)?;
        let r = env.step(affdrive::env::Action::new(a[0], a[1]))?;
        if r.done() {
            break;
        }
        obs = r.obs;
    }
    write_manifest(run, "export", json!({ "checkpoint": ckpt, "frames": frames, "every": every }))?;
    println!("{frames} frames in {}", dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let preset = match &cli.command {
        Command::Train { preset, .. } => *preset,
        _ => None,
    };
    let run = prepare(&cli.command, preset)?;
    match cli.command {
        Command::Train { steps, checkpoint_every, .. } => cmd_train(&run, steps, checkpoint_every),
        Command::Eval { checkpoint, routes, reps, jobs, .. } => {
            cmd_eval(&run, &checkpoint, routes.as_deref(), reps, jobs)
        }
        Command::Rollout { checkpoint, start, goal, stochastic, .. } => {
            let route = start.zip(goal).map(|(start, goal)| RouteRequest { start, goal });
            cmd_rollout(&run, &checkpoint, route, stochastic)
        }
        Command::Ablate { preset, seeds, steps, reps, jobs, check, .. } => {
            cmd_ablate(&run, preset, seeds, steps, reps, jobs, check)
        }
        Command::Export { checkpoint, every, max_frames, .. } => cmd_export(&run, &checkpoint, every, max_frames),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.is::<CheckFailed>() {
        return EXIT_ACCEPTANCE;
    }
    match e.downcast_ref::<affdrive::Error>() {
        Some(err) if err.is_config() => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
