use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use glmb_core::models::Observation;
use glmb_harness::config::{Config, ConfigError, Variant};
use glmb_harness::output::{read_csv, write_csv, write_json, write_jsonl, DetectionRow, TrackRow};
use glmb_harness::{battery, pgm, runner};
use nalgebra::Vector2;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "glmb", version, about = "GLMB tracking with joint detection and image likelihoods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed. Falls back to GLMB_SEED, then the config.
    #[arg(long, env = "GLMB_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario: frames (PGM), truth and detections (CSV).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo run index whose scene to render.
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Run one filter over frames written by `simulate`.
    Track {
        #[command(flatten)]
        common: Common,
        /// Directory produced by `simulate`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "glmb-im", value_parser = parse_variant)]
        variant: Variant,
        #[arg(long)]
        h_max: Option<usize>,
    },
    /// Per-frame OSPA of a track CSV against a truth CSV.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired Monte Carlo comparison of both variants.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        h_max: Option<usize>,
    },
    /// Gibbs-truncated update against exact enumeration on small instances.
    OracleCheck {
        #[arg(long, env = "GLMB_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Draw detection and birth probabilities at random instead of
        /// using the configured values.
        #[arg(long)]
        stressed: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant {s:?} (expected glmb or glmb-im)"))
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    status: &'static str,
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    key: Option<&'a str>,
    message: String,
}

fn report_error(kind: &str, key: Option<&str>, message: String) {
    let line = ErrorLine {
        status: "error",
        kind,
        key,
        message,
    };
    eprintln!("{}", serde_json::to_string(&line).expect("error line serialises"));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", None, e.to_string().trim().to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                report_error("config", Some(&c.key), c.message.clone());
                ExitCode::from(3)
            } else {
                report_error("runtime", None, format!("{e:#}"));
                ExitCode::FAILURE
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn prepare(common: &Common) -> Result<(Config, u64)> {
    let cfg = load_config(common.config.as_deref())?;
    let seed = common.seed.unwrap_or(cfg.seed);
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok((cfg, seed))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, run } => simulate(&common, run),
        Command::Track {
            common,
            input,
            variant,
            h_max,
        } => track(&common, &input, variant, h_max),
        Command::Eval {
            config,
            tracks,
            truth,
            out,
        } => eval(config.as_deref(), &tracks, &truth, &out),
        Command::Mc { common, runs, h_max } => mc(&common, runs, h_max),
        Command::OracleCheck {
            seed,
            instances,
            trials,
            stressed,
            out,
        } => {
            let family = if stressed { battery::Family::Stressed } else { battery::Family::Nominal };
            oracle_check(seed, family, instances, trials, out.as_deref())
        }
    }
}

#[derive(Serialize)]
struct ScenarioFile<'a> {
    seed: u64,
    run: usize,
    run_seed: u64,
    input_checksum: String,
    scenario: &'a glmb_harness::config::ScenarioConfig,
}

fn simulate(common: &Common, run: usize) -> Result<()> {
    let (cfg, seed) = prepare(common)?;
    let rs = runner::run_seed(seed, run);
    let data = runner::simulate(&cfg, rs)?;
    let frames = common.out.join("frames");
    std::fs::create_dir_all(&frames)?;
    let mut detections = Vec::new();
    for (k, obs) in data.observations.iter().enumerate() {
        pgm::write_frame(&frames.join(format!("frame_{:04}.pgm", k + 1)), &obs.image)?;
        detections.extend(obs.detections.iter().enumerate().map(|(i, z)| DetectionRow {
            frame: k as u32 + 1,
            index: i,
            x: z[0],
            y: z[1],
        }));
    }
    write_csv(&common.out.join("truth.csv"), &runner::truth_rows(&data.truth, run))?;
    write_csv(&common.out.join("detections.csv"), &detections)?;
    write_json(&common.out.join("config.json"), &cfg)?;
    write_json(
        &common.out.join("scenario.json"),
        &ScenarioFile {
            seed,
            run,
            run_seed: rs,
            input_checksum: format!("{:016x}", data.checksum),
            scenario: &cfg.scenario,
        },
    )?;
    eprintln!("simulate: {} frames written to {}", data.observations.len(), common.out.display());
    Ok(())
}

fn read_recorded(input: &Path) -> Result<Vec<Observation>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input.join("frames"))
        .with_context(|| format!("reading {}", input.join("frames").display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    let detections: Vec<DetectionRow> = read_csv(&input.join("detections.csv"))?;
    paths
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let frame = k as u32 + 1;
            Ok(Observation {
                image: pgm::read_frame(p)?,
                detections: detections
                    .iter()
                    .filter(|d| d.frame == frame)
                    .map(|d| Vector2::new(d.x, d.y))
                    .collect(),
            })
        })
        .collect()
}

fn track(common: &Common, input: &Path, variant: Variant, h_max: Option<usize>) -> Result<()> {
    let config_path = common
        .config
        .clone()
        .or_else(|| Some(input.join("config.json")).filter(|p| p.exists()));
    let cfg = load_config(config_path.as_deref())?;
    let seed = common.seed.unwrap_or(cfg.seed);
    std::fs::create_dir_all(&common.out)?;
    let observations = read_recorded(input)?;
    if observations.is_empty() {
        return Err(anyhow!("no frames found under {}", input.display()));
    }
    let started = Instant::now();
    let out = runner::track(&cfg, variant, &observations, seed, h_max)?;
    write_csv(&common.out.join("tracks.csv"), &runner::track_rows(&out, 0, variant.name()))?;
    let snaps: Vec<_> = out.iter().map(|f| f.snapshot.clone()).collect();
    write_jsonl(&common.out.join("snapshots.jsonl"), &snaps)?;
    write_json(&common.out.join("config.json"), &cfg)?;
    eprintln!("track: {} frames in {:.2?}", out.len(), started.elapsed());
    Ok(())
}

fn eval(config: Option<&Path>, tracks: &Path, truth: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    std::fs::create_dir_all(out)?;
    let est: Vec<TrackRow> = read_csv(tracks)?;
    let tru: Vec<TrackRow> = read_csv(truth)?;
    let last = est.iter().chain(&tru).map(|r| r.frame).max().unwrap_or(0);
    let mut keys: Vec<(usize, String)> = est.iter().map(|r| (r.run, r.variant.clone())).collect();
    keys.sort();
    keys.dedup();
    let runs: Vec<usize> = {
        let mut r: Vec<usize> = tru.iter().map(|r| r.run).chain(keys.iter().map(|k| k.0)).collect();
        r.sort_unstable();
        r.dedup();
        r
    };
    if keys.is_empty() {
        // No estimates at all: score one empty estimator per truth run.
        keys = runs.iter().map(|&r| (r, "estimate".to_string())).collect();
    }
    let mut metrics = Vec::new();
    for (run, variant) in &keys {
        let e: Vec<TrackRow> = est.iter().filter(|r| r.run == *run && &r.variant == variant).cloned().collect();
        let t: Vec<TrackRow> = tru.iter().filter(|r| r.run == *run).cloned().collect();
        metrics.extend(runner::frame_metrics(&cfg, &e, &t, last, *run, variant, None));
    }
    write_csv(&out.join("metrics.csv"), &metrics)?;
    write_json(&out.join("report.json"), &runner::aggregate(&metrics))?;
    Ok(())
}

fn mc(common: &Common, runs: Option<usize>, h_max: Option<usize>) -> Result<()> {
    let (cfg, seed) = prepare(common)?;
    let runs = runs.unwrap_or(cfg.runs);
    let started = Instant::now();
    let out = runner::run_monte_carlo(&cfg, runs, seed, h_max)?;
    write_json(&common.out.join("config.json"), &cfg)?;
    write_json(&common.out.join("report.json"), &out.report)?;
    write_csv(&common.out.join("metrics.csv"), &out.metrics)?;
    write_csv(&common.out.join("tracks.csv"), &out.tracks)?;
    write_csv(&common.out.join("truth.csv"), &out.truth)?;
    for v in &out.report.variants {
        eprintln!(
            "mc: {:8} mean OSPA {:.3} (challenging {:.3}), |card err| <= 1 on {:.1}% of frames",
            v.variant,
            v.mean_ospa,
            v.mean_ospa_challenging,
            100.0 * v.cardinality_within_one
        );
    }
    eprintln!("mc: {runs} runs in {:.2?}", started.elapsed());
    Ok(())
}

fn oracle_check(
    seed: u64,
    family: battery::Family,
    instances: usize,
    trials: usize,
    out: Option<&Path>,
) -> Result<()> {
    let summary = battery::run_battery(seed, family, instances, trials)?;
    println!(
        "oracle-check: instances={} trials={} max_l1={:.6} min_captured_mass={:.6}",
        summary.instances, summary.trials, summary.max_l1, summary.min_captured_mass
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("oracle_check.json"), &summary)?;
    }
    Ok(())
}
