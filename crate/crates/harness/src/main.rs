use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cheq_env::{generate_track, TrackGenParams};
use cheq_harness::experiments::{ablation_plan, racing_plan, run_plan, run_transfer, ABLATION_DIR, RACING_DIR};
use cheq_harness::{
    transfer_protocol, HarnessError, LoadedCheckpoint, Result, RunConfig, TrackSpec, TransferSettings, OUT_DIR_ENV,
};

#[derive(Parser)]
#[command(name = "cheq", version, about = "Train, evaluate and transfer hybrid RL agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write its metric streams, checkpoints and summary.
    Train {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        label: Option<String>,
        /// Output root; overrides CHEQ_OUT_DIR and the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace a finished run in the same directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Greedy episodes from a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Evaluate on a generated track instead of the training track.
        #[arg(long, conflicts_with = "track")]
        track_seed: Option<u64>,
        #[arg(long)]
        track: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Every checkpoint on every generated track, plus the prior alone.
    Transfer {
        #[arg(long, num_args = 1.., required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        tracks: u64,
        #[arg(long, default_value_t = 1000)]
        track_seed_base: u64,
        #[arg(long, default_value_t = 1000)]
        episode_steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write generated tracks as JSON files.
    GenTrack {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Track generator parameters as JSON.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config file or bundled profile without running it.
    ValidateConfig {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Print a bundled profile as a config file.
    ShowProfile { name: String },
    /// Run a desk-scale experiment protocol; finished runs are reused.
    Experiment {
        #[arg(value_enum)]
        which: Experiment,
        /// Results root; defaults to CHEQ_OUT_DIR, then `results`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u64>,
    },
}

#[derive(clap::Args)]
#[group(required = true, multiple = false)]
struct ConfigSource {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    profile: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<RunConfig> {
        match (&self.config, &self.profile) {
            (Some(path), _) => RunConfig::load(path),
            (None, Some(name)) => {
                let cfg = RunConfig::profile(name)?;
                cfg.validate()?;
                Ok(cfg)
            }
            (None, None) => Err(HarnessError::InvalidConfig("no config given".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Ablation,
    Racing,
    Transfer,
    All,
}

/// Writes to stdout; a closed pipe on the reading side is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json(value: &serde_json::Value) {
    emit(&serde_json::to_string_pretty(value).expect("json value"));
}

fn results_root(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn progress(cfg: &RunConfig, s: &cheq_harness::Summary, cached: bool) {
    eprintln!(
        "{}/seed-{} final_return {:.2} cum_failures {}{}",
        cfg.label,
        cfg.seed,
        s.final_return,
        s.cum_failures,
        if cached { " (cached)" } else { "" }
    );
}

fn experiment(which: Experiment, root: &Path, seeds: Option<u64>) -> Result<serde_json::Value> {
    let mut report = serde_json::Map::new();
    if matches!(which, Experiment::Ablation | Experiment::All) {
        let s = run_plan(&ablation_plan(seeds.unwrap_or(5)), root, ABLATION_DIR, progress)?;
        report.insert("ablation".into(), json!(s));
    }
    if matches!(which, Experiment::Racing | Experiment::All) {
        let s = run_plan(&racing_plan(seeds.unwrap_or(3)), root, RACING_DIR, progress)?;
        report.insert("racing".into(), json!(s));
    }
    if matches!(which, Experiment::Transfer | Experiment::All) {
        let s = run_transfer(root, &TransferSettings::default())?;
        report.insert("transfer".into(), json!(s));
    }
    Ok(serde_json::Value::Object(report))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            source,
            seed,
            steps,
            label,
            out,
            overwrite,
        } => {
            let mut cfg = source.load()?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(steps) = steps {
                cfg.total_steps = steps;
            }
            if let Some(label) = label {
                cfg.label = label;
            }
            cfg.validate()?;
            let root = out.unwrap_or_else(|| cfg.resolved_root());
            let run = cheq_harness::train_run(&cfg, &cfg.run_dir(&root), overwrite)?;
            print_json(&json!({ "run_dir": run.run_dir, "summary": run.summary }));
        }
        Command::Eval {
            checkpoint,
            episodes,
            track_seed,
            track,
            seed,
        } => {
            let loaded = LoadedCheckpoint::load(&checkpoint)?;
            let spec = match (track_seed, track) {
                (Some(seed), _) => Some(TrackSpec::Generated {
                    seed,
                    params: TrackGenParams::default(),
                }),
                (None, Some(path)) => Some(TrackSpec::File { path }),
                (None, None) => None,
            };
            let mut task = loaded.task(spec, None)?;
            let traces = loaded.evaluate(&mut task, episodes.max(1), seed)?;
            let rows: Vec<_> = traces
                .iter()
                .map(|t| json!({ "return": t.ret, "failure": t.failure, "steps": t.steps }))
                .collect();
            let n = traces.len() as f64;
            print_json(&json!({
                "checkpoint": checkpoint,
                "step": loaded.manifest.step,
                "episodes": rows,
                "mean_return": traces.iter().map(|t| t.ret).sum::<f64>() / n,
                "success_rate": traces.iter().filter(|t| !t.failure).count() as f64 / n,
            }));
        }
        Command::Transfer {
            checkpoints,
            tracks,
            track_seed_base,
            episode_steps,
            out,
        } => {
            let settings = TransferSettings {
                track_seeds: (track_seed_base..track_seed_base + tracks).collect(),
                episode_steps,
                ..TransferSettings::default()
            };
            let summary = transfer_protocol(&checkpoints, &settings, &out)?;
            print_json(&json!(summary));
        }
        Command::GenTrack {
            seed,
            count,
            params,
            out,
        } => {
            let params: TrackGenParams = match params {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(&path).map_err(|source| {
                    HarnessError::File { path, source }
                })?)?,
                None => TrackGenParams::default(),
            };
            std::fs::create_dir_all(&out)?;
            let mut written = Vec::new();
            for s in seed..seed + count {
                let track = generate_track(s, &params)?;
                let path = out.join(format!("track-{s}.json"));
                track.save_json(&path)?;
                written.push(json!({ "seed": s, "path": path, "length": track.length() }));
            }
            print_json(&json!(written));
        }
        Command::ValidateConfig { source } => {
            let cfg = source.load()?;
            print_json(&json!({ "valid": true, "config_hash": cfg.config_hash() }));
        }
        Command::ShowProfile { name } => {
            emit(&RunConfig::profile(&name)?.to_json());
        }
        Command::Experiment { which, out, seeds } => {
            let root = results_root(out);
            print_json(&experiment(which, &root, seeds)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = json!({ "error": { "kind": "usage", "message": e.to_string().trim() } });
            eprintln!("{report}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.report() }));
            ExitCode::from(if e.kind() == "invalid_config" { 2 } else { 1 })
        }
    }
}
