//! Command-line front end: offline pre-training, online runs across
//! controllers and seeds, and plotting.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use switchrl::controllers::{ControllerConfig, ControllerKind, OffValueMode};
use switchrl::envs::{
    generate_offline_dataset, optimal_return, parse_env, random_return, DatasetTier,
};
use switchrl::harness::{
    render_svg, rows_from_csv, rows_to_csv, rows_to_json, run_experiment, ExperimentSpec,
    DEFAULT_SMOOTH_WINDOW,
};
use switchrl::learner::{offline_pretrain, LearnerConfig};
use switchrl::rng::{stream_rng, Stream};
use switchrl::{Checkpoint, SEED_OFFSET_ENV};

#[derive(Parser)]
#[command(
    name = "switchrl",
    about = "Offline-to-online RL with mode-switching exploration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an offline dataset, pre-train (policy, Q, V), write a checkpoint.
    Pretrain(PretrainArgs),
    /// Run the online stage for one controller across seeds.
    Run(RunArgs),
    /// Render CSV metrics from a run directory into an SVG figure.
    Plot(PlotArgs),
}

#[derive(Args)]
struct PretrainArgs {
    /// Environment spec file.
    #[arg(long)]
    env: PathBuf,
    /// Dataset tier: random | medium | medium-replay.
    #[arg(long)]
    tier: String,
    /// Output checkpoint path (a .json sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    dataset_size: usize,
    #[arg(long, default_value_t = 200_000)]
    offline_iters: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.9)]
    expectile_tau: f64,
    #[arg(long, default_value_t = 10.0)]
    inv_temperature: f64,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.99)]
    discount: f64,
    #[arg(long, default_value_t = 5e-3)]
    target_update_speed: f64,
    /// key = value file; entries override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Checkpoint produced by `pretrain`.
    #[arg(long, alias = "pretrained")]
    ckpt: PathBuf,
    /// nonmono | pex | offline | buffer.
    #[arg(long)]
    controller: String,
    /// Seed list: "0..4" (inclusive range) or comma-separated "0,1,2".
    #[arg(long, default_value = "0..4")]
    seeds: String,
    /// Output directory for CSV/JSON/meta files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, default_value_t = 100)]
    explore_fixed_steps: u32,
    #[arg(long, default_value_t = 10)]
    update_timestep: u32,
    #[arg(long, default_value_t = 10)]
    promise_k: usize,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pex_alpha: f64,
    /// greedy | expected: offline value extraction for the promise signal.
    #[arg(long, default_value = "greedy")]
    off_value: String,
    #[arg(long, default_value_t = 50_000)]
    online_steps: u64,
    #[arg(long, default_value_t = 500)]
    eval_interval: u64,
    #[arg(long, default_value_t = 20)]
    eval_episodes: u32,
    #[arg(long, default_value_t = 500)]
    initial_collection_steps: u64,
    #[arg(long, default_value_t = 1_000_000)]
    capacity: usize,
    /// key = value file; entries override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding *.csv metrics files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Centered moving-average window (eval points), plot layer only.
    #[arg(long, default_value_t = DEFAULT_SMOOTH_WINDOW)]
    smooth_window: usize,
}

fn main() {
    if let Err(e) = dispatch() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Pretrain(args) => pretrain(args),
        Command::Run(args) => run(args),
        Command::Plot(args) => plot(args),
    }
}

fn seed_offset() -> Result<u64> {
    match std::env::var(SEED_OFFSET_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_OFFSET_ENV} must be an integer, got '{v}'")),
        Err(_) => Ok(0),
    }
}

/// Parses a `key = value` override file (one entry per line, `#` comments).
fn load_overrides(path: &Path) -> Result<HashMap<String, String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {} is not key = value: '{raw}'", i + 1);
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn take<T: std::str::FromStr>(
    map: &mut HashMap<String, String>,
    key: &str,
    slot: &mut T,
) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = map.remove(key) {
        *slot = v
            .parse()
            .map_err(|e| anyhow::anyhow!("config key {key} = '{v}': {e}"))?;
    }
    Ok(())
}

fn ensure_consumed(map: HashMap<String, String>) -> Result<()> {
    if let Some(key) = map.keys().next() {
        bail!("unknown config key '{key}'");
    }
    Ok(())
}

fn pretrain(mut args: PretrainArgs) -> Result<()> {
    if let Some(path) = args.config.clone() {
        let mut map = load_overrides(&path)?;
        take(&mut map, "tier", &mut args.tier)?;
        take(&mut map, "dataset_size", &mut args.dataset_size)?;
        take(&mut map, "offline_iters", &mut args.offline_iters)?;
        take(&mut map, "seed", &mut args.seed)?;
        take(&mut map, "expectile_tau", &mut args.expectile_tau)?;
        take(&mut map, "inv_temperature", &mut args.inv_temperature)?;
        take(&mut map, "learning_rate", &mut args.learning_rate)?;
        take(&mut map, "batch_size", &mut args.batch_size)?;
        take(&mut map, "discount", &mut args.discount)?;
        take(
            &mut map,
            "target_update_speed",
            &mut args.target_update_speed,
        )?;
        ensure_consumed(map)?;
    }
    let seed = args.seed + seed_offset()?;
    let tier: DatasetTier = args.tier.parse()?;
    let env_text = fs::read_to_string(&args.env)
        .with_context(|| format!("reading env spec {}", args.env.display()))?;
    let env = parse_env(&env_text)?;
    let learner = LearnerConfig {
        expectile_tau: args.expectile_tau,
        inv_temperature: args.inv_temperature,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        discount: args.discount,
        target_update_speed: args.target_update_speed,
    };
    learner.validate()?;

    eprintln!(
        "generating {} {} transitions (seed {seed})",
        args.dataset_size, tier
    );
    let dataset = generate_offline_dataset(env.as_ref(), tier, args.dataset_size, seed)?;
    eprintln!("pre-training for {} iterations", args.offline_iters);
    let mut rng = stream_rng(seed, Stream::Sampler);
    let artifacts = offline_pretrain(&dataset, &learner, args.offline_iters, &mut rng)?;
    let ckpt = Checkpoint::new(
        env_text,
        tier,
        learner,
        args.offline_iters,
        seed,
        artifacts,
        dataset,
        random_return(env.as_ref(), seed),
        optimal_return(env.as_ref()),
    )?;
    ckpt.save(&args.out)?;
    println!(
        "wrote {} (digest {}, optimal return {:.3}, random return {:.3})",
        args.out.display(),
        ckpt.digest(),
        ckpt.optimal_return,
        ckpt.random_return
    );
    Ok(())
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo.trim().parse().context("seed range start")?;
        let hi: u64 = hi.trim().parse().context("seed range end")?;
        if hi < lo {
            bail!("empty seed range {spec}");
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().with_context(|| format!("seed '{s}'")))
        .collect()
}

fn run(mut args: RunArgs) -> Result<()> {
    if let Some(path) = args.config.clone() {
        let mut map = load_overrides(&path)?;
        take(&mut map, "controller", &mut args.controller)?;
        take(&mut map, "seeds", &mut args.seeds)?;
        take(&mut map, "rho", &mut args.rho)?;
        take(
            &mut map,
            "explore_fixed_steps",
            &mut args.explore_fixed_steps,
        )?;
        take(&mut map, "update_timestep", &mut args.update_timestep)?;
        take(&mut map, "promise_k", &mut args.promise_k)?;
        take(&mut map, "gamma", &mut args.gamma)?;
        take(&mut map, "pex_alpha", &mut args.pex_alpha)?;
        take(&mut map, "off_value", &mut args.off_value)?;
        take(&mut map, "online_steps", &mut args.online_steps)?;
        take(&mut map, "eval_interval", &mut args.eval_interval)?;
        take(&mut map, "eval_episodes", &mut args.eval_episodes)?;
        take(
            &mut map,
            "initial_collection_steps",
            &mut args.initial_collection_steps,
        )?;
        take(&mut map, "capacity", &mut args.capacity)?;
        ensure_consumed(map)?;
    }

    let controller: ControllerKind = args.controller.parse()?;
    let off_value: OffValueMode = args.off_value.parse()?;
    let offset = seed_offset()?;
    let seeds: Vec<u64> = parse_seeds(&args.seeds)?
        .into_iter()
        .map(|s| s + offset)
        .collect();

    let ckpt = Checkpoint::load(&args.ckpt)?;
    let spec = ExperimentSpec {
        controller,
        controller_cfg: ControllerConfig {
            rho: args.rho,
            explore_fixed_steps: args.explore_fixed_steps,
            update_timestep: args.update_timestep,
            promise_k: args.promise_k,
            gamma: args.gamma,
            pex_alpha: args.pex_alpha,
            off_value,
        },
        online_steps: args.online_steps,
        eval_interval: args.eval_interval,
        eval_episodes: args.eval_episodes,
        initial_collection_steps: args.initial_collection_steps,
        online_buffer_capacity: args.capacity,
        seeds: seeds.clone(),
    };
    spec.validate()?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let output = run_experiment(&ckpt, &spec)?;

    for (seed, result) in seeds.iter().zip(&output.per_seed) {
        let last = result.rows.last();
        println!(
            "seed {seed}: offline {} / online {} steps, final return {}",
            result.counters.offline_count,
            result.counters.online_count,
            last.map_or("n/a".to_string(), |r| format!("{:.1}", r.return_norm)),
        );
    }

    let base = args.out.join(controller.id());
    let csv_path = base.with_extension("csv");
    fs::write(&csv_path, rows_to_csv(&output.rows))
        .with_context(|| format!("writing {}", csv_path.display()))?;
    let json_path = base.with_extension("json");
    fs::write(&json_path, rows_to_json(&output.rows))
        .with_context(|| format!("writing {}", json_path.display()))?;
    let meta = serde_json::json!({
        "controller": controller.id(),
        "ckpt": args.ckpt.display().to_string(),
        "ckpt_digest": output.ckpt_digest,
        "seeds": seeds,
        "online_steps": spec.online_steps,
        "eval_interval": spec.eval_interval,
        "eval_episodes": spec.eval_episodes,
        "initial_collection_steps": spec.initial_collection_steps,
        "controller_cfg": spec.controller_cfg,
    });
    let meta_path = args.out.join(format!("{}.meta.json", controller.id()));
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
        .with_context(|| format!("writing {}", meta_path.display()))?;
    println!(
        "wrote {}, {}, {}",
        csv_path.display(),
        json_path.display(),
        meta_path.display()
    );
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let mut rows = Vec::new();
    let mut files = 0;
    for entry in
        fs::read_dir(&args.input).with_context(|| format!("reading {}", args.input.display()))?
    {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let text =
                fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            rows.extend(rows_from_csv(&text)?);
            files += 1;
        }
    }
    if files == 0 {
        bail!("no .csv files in {}", args.input.display());
    }
    let svg = render_svg(&rows, args.smooth_window)?;
    fs::write(&args.out, svg).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} ({} rows from {files} files)",
        args.out.display(),
        rows.len()
    );
    Ok(())
}
