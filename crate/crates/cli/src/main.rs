//! `alcon`: generate datasets, train the learned planners, run single
//! episodes, benchmark planners and replay episode logs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use alcon::config::{parse_kv, RunConfig};
use alcon::eval::{export, run_benchmark, summary_csv, PlannerKind};
use alcon::exec::{init_pool, Exec};
use alcon::gridmap::{OccupancyGrid, Pose, WorldPoint};
use alcon::rlp::{train_dual, DualPlanner};
use alcon::sim::{run_episode, EpisodeLog, PreparedEpisode};
use alcon::worldgen::{gen_dataset, gen_workspace, read_dataset, sample_episode, write_dataset, EpisodeSpec};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

const CONFIG_FILE: &str = "config.txt";

#[derive(Parser, Debug)]
#[command(name = "alcon", version, about = "Grid-world active loop closing laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a training dataset of score maps.
    Gen {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train the ON and ALC actor-critic pairs on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run one episode and write its round log.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        planner: PlannerKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Benchmark planners over paired episodes.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Recompute path lengths from an episode log and compare.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

/// Config file (if any), then `--seed`, falling back to `ALCON_SEED` when
/// neither sets the seed.
fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let (mut cfg, has_seed) = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let has_seed = parse_kv(&text)?.contains_key("seed");
            (RunConfig::from_text(&text)?, has_seed)
        }
        None => (RunConfig::default(), false),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    } else if !has_seed {
        if let Ok(v) = std::env::var("ALCON_SEED") {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| alcon::Error::param("ALCON_SEED", format!("not an integer: {v:?}")))?;
        }
    }
    cfg.sync();
    Ok(cfg)
}

fn prepare_out(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.save(&dir.join(CONFIG_FILE))?;
    Ok(())
}

fn cmd_gen(count: Option<usize>, seed: Option<u64>, out: &Path, config: Option<&Path>, jobs: usize) -> Result<()> {
    let mut cfg = resolve_config(config, seed)?;
    if let Some(n) = count {
        cfg.dataset.count = n;
    }
    cfg.jobs = jobs;
    cfg.sync();
    cfg.validate()?;
    prepare_out(out, &cfg)?;
    init_pool(jobs);
    let entries = gen_dataset(&cfg.dataset, Exec::from_jobs(jobs))?;
    write_dataset(&entries, out)?;
    println!("gen count={} seed={} out={}", entries.len(), cfg.seed, out.display());
    Ok(())
}

fn cmd_train(dataset: &Path, out: &Path, seed: Option<u64>, config: Option<&Path>, jobs: usize) -> Result<()> {
    let mut cfg = resolve_config(config, seed)?;
    cfg.jobs = jobs;
    cfg.sync();
    cfg.validate()?;
    prepare_out(out, &cfg)?;
    init_pool(jobs);
    let entries = read_dataset(dataset)?;
    let (dual, report) = train_dual(&entries, &cfg.train, &cfg.fusion, &cfg.sim, Exec::from_jobs(jobs))?;
    dual.save(out)?;
    let curves = out.join("curves.csv");
    fs::write(&curves, report.curves_csv()).with_context(|| format!("writing {}", curves.display()))?;
    let rep = out.join("train_report.json");
    fs::write(&rep, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", rep.display()))?;
    println!(
        "train samples={} heldout={} e_on={:.4} baseline_on={:.4} e_alc={:.4} baseline_alc={:.4}",
        report.train_samples,
        report.heldout_samples,
        report.heldout_e_on,
        report.baseline_e_on,
        report.heldout_e_alc,
        report.baseline_e_alc
    );
    Ok(())
}

/// Episode spec file: `key=value` lines. The world is either `map=<pgm>` or
/// generated from `world_seed`; start and goal are sampled from `seed` and
/// `K` unless all of `start_x start_y goal_x goal_y` are given.
fn load_spec(path: &Path, cfg: &RunConfig) -> Result<EpisodeSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let kv = parse_kv(&text)?;
    const KEYS: [&str; 11] = [
        "map",
        "world_seed",
        "seed",
        "K",
        "start_x",
        "start_y",
        "start_heading",
        "goal_x",
        "goal_y",
        "predicted_x",
        "predicted_y",
    ];
    if let Some(k) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(alcon::Error::param(k.as_str(), "unknown spec key").into());
    }
    let num = |k: &str| -> Result<Option<f64>> {
        kv.get(k)
            .map(|v| v.parse::<f64>().map_err(|_| alcon::Error::param(k, format!("not a number: {v:?}")).into()))
            .transpose()
    };
    let int = |k: &str| -> Result<Option<u64>> {
        kv.get(k)
            .map(|v| v.parse::<u64>().map_err(|_| alcon::Error::param(k, format!("not an integer: {v:?}")).into()))
            .transpose()
    };
    let seed = int("seed")?.unwrap_or(cfg.seed);
    let k = num("K")?.unwrap_or(cfg.dataset.k_values[0]);
    let world = match kv.get("map") {
        Some(m) => {
            let p = path.parent().unwrap_or(Path::new(".")).join(m);
            OccupancyGrid::load_pgm(&p)?
        }
        None => gen_workspace(int("world_seed")?.unwrap_or(seed), &cfg.workspace)?,
    };
    let world = Arc::new(world);
    let fixed = [num("start_x")?, num("start_y")?, num("goal_x")?, num("goal_y")?];
    let spec = match fixed {
        [Some(sx), Some(sy), Some(gx), Some(gy)] => {
            let goal = WorldPoint::new(gx, gy);
            EpisodeSpec {
                workspace: world,
                start: Pose::new(sx, sy, num("start_heading")?.unwrap_or(0.0)),
                goal,
                predicted_goal: WorldPoint::new(num("predicted_x")?.unwrap_or(gx), num("predicted_y")?.unwrap_or(gy)),
                k,
                seed,
            }
        }
        [None, None, None, None] => sample_episode(&world, k, seed)?,
        _ => bail!("spec must give all of start_x, start_y, goal_x, goal_y or none of them"),
    };
    spec.validate()?;
    Ok(spec)
}

fn load_models(planner: PlannerKind, models: Option<&Path>, cfg: &RunConfig) -> Result<Option<DualPlanner>> {
    if !planner.needs_models() {
        return Ok(None);
    }
    let dir = models
        .map(Path::to_path_buf)
        .or_else(|| cfg.model_dir.clone())
        .ok_or_else(|| alcon::Error::param("model_dir", format!("planner {} needs --models", planner.as_str())))?;
    Ok(Some(DualPlanner::load(&dir)?))
}

fn cmd_run(spec: &Path, planner: PlannerKind, out: &Path, models: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let mut cfg = resolve_config(config, None)?;
    if let Some(m) = models {
        cfg.model_dir = Some(m.to_path_buf());
    }
    cfg.validate()?;
    let dual = load_models(planner, models, &cfg)?;
    let spec = load_spec(spec, &cfg)?;
    prepare_out(out, &cfg)?;
    let ep = PreparedEpisode::new(spec, &cfg.sim)?;
    let p = planner.build(dual.as_ref(), &cfg.fusion, cfg.sim.disk_radius_m)?;
    let outcome = run_episode(&ep, p.as_ref(), &cfg.sim)?;
    let log = out.join("episode.jsonl");
    fs::write(&log, outcome.log.to_jsonl()).with_context(|| format!("writing {}", log.display()))?;
    let spl = alcon::eval::spl(std::slice::from_ref(&outcome))?;
    println!(
        "run planner={} success={} path_length={:.4} shortest={:.4} steps={} spl={:.4}",
        planner.as_str(),
        outcome.success,
        outcome.path_length,
        outcome.shortest_length,
        outcome.steps,
        spl
    );
    Ok(())
}

fn cmd_bench(config: &Path, out: &Path, models: Option<&Path>, seed: Option<u64>, jobs: Option<usize>) -> Result<()> {
    let mut cfg = resolve_config(Some(config), seed)?;
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    if let Some(m) = models {
        cfg.model_dir = Some(m.to_path_buf());
    }
    cfg.sync();
    cfg.validate()?;
    let dual = if cfg.bench.needs_models() {
        let dir = cfg
            .model_dir
            .clone()
            .ok_or_else(|| alcon::Error::param("model_dir", "learned planners need trained models"))?;
        Some(DualPlanner::load(&dir)?)
    } else {
        None
    };
    prepare_out(out, &cfg)?;
    init_pool(cfg.jobs);
    let report = run_benchmark(&cfg.bench, dual.as_ref(), Exec::from_jobs(cfg.jobs))?;
    export(&report, out)?;
    print!("{}", summary_csv(&report));
    Ok(())
}

fn cmd_replay(log: &Path) -> Result<()> {
    let text = fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    let parsed = EpisodeLog::from_jsonl(&text).with_context(|| format!("parsing {}", log.display()))?;
    let recomputed = parsed.replay_path_lengths();
    let mut worst = 0.0f64;
    for (r, rec) in recomputed.iter().zip(&parsed.records) {
        let err = (r - rec.path_length).abs() / rec.path_length.max(1.0);
        worst = worst.max(err);
    }
    let total = recomputed.last().copied().unwrap_or(0.0);
    println!(
        "replay records={} path_length={:.6} max_rel_err={:.3e}",
        parsed.records.len(),
        total,
        worst
    );
    if worst > 1e-9 {
        return Err(anyhow!("recomputed path length differs from the log by {worst:.3e}"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.cmd {
        Cmd::Gen {
            count,
            seed,
            out,
            config,
            jobs,
        } => cmd_gen(*count, *seed, out, config.as_deref(), *jobs),
        Cmd::Train {
            dataset,
            out,
            seed,
            config,
            jobs,
        } => cmd_train(dataset, out, *seed, config.as_deref(), *jobs),
        Cmd::Run {
            spec,
            planner,
            out,
            models,
            config,
        } => cmd_run(spec, *planner, out, models.as_deref(), config.as_deref()),
        Cmd::Bench {
            config,
            out,
            models,
            seed,
            jobs,
        } => cmd_bench(config, out, models.as_deref(), *seed, *jobs),
        Cmd::Replay { log } => cmd_replay(log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
