//! Zero-shot transfer: every checkpoint drives one greedy adapted episode on
//! every generated track, next to the prior alone on the same tracks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cheq_core::train::{derive_stream, StreamId};
use cheq_core::{prior_episode, ResetMode};
use cheq_env::TrackGenParams;

use crate::config::TrackSpec;
use crate::error::{HarnessError, Result};
use crate::run::LoadedCheckpoint;

pub const TRANSFER_CSV: &str = "transfer.csv";
pub const TRANSFER_STEPS_CSV: &str = "transfer_steps.csv";
pub const PRIOR_CSV: &str = "prior.csv";
pub const TRANSFER_SUMMARY_JSON: &str = "transfer_summary.json";

pub const TRANSFER_HEADER: &str = "model,track,return,success,steps,min_lambda,curve_min_lambda,handover";
pub const TRANSFER_STEPS_HEADER: &str = "model,track,step,x,y,lambda,radius";
pub const PRIOR_HEADER: &str = "track,return,success,steps";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSettings {
    pub track_seeds: Vec<u64>,
    pub track_params: TrackGenParams,
    pub episode_steps: usize,
    /// Curve radius ahead below which a track section counts as a curve (m).
    pub curve_radius: f64,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self {
            track_seeds: (1000..1010).collect(),
            track_params: TrackGenParams::default(),
            episode_steps: 1000,
            curve_radius: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub model: usize,
    pub track: u64,
    pub ret: f64,
    pub success: bool,
    pub steps: u64,
    pub min_lambda: f64,
    /// Lowest weight on curve sections, if the episode reached one.
    pub curve_min_lambda: Option<f64>,
    /// The weight fell below its maximum on a curve after having reached it.
    pub handover: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub models: Vec<PathBuf>,
    pub tracks: Vec<u64>,
    pub rows: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    pub prior_success_rate: f64,
    pub prior_mean_return: f64,
    /// Tracks on which at least one model handed over to the prior on a curve.
    pub tracks_with_handover: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Summary statistics over a finished row set.
pub fn summarize(models: &[PathBuf], tracks: &[u64], rows: &[TransferRow], prior: &[(u64, f64, bool)]) -> TransferSummary {
    let returns: Vec<f64> = rows.iter().map(|r| r.ret).collect();
    let successes = rows.iter().filter(|r| r.success).count();
    let prior_returns: Vec<f64> = prior.iter().map(|p| p.1).collect();
    TransferSummary {
        models: models.to_vec(),
        tracks: tracks.to_vec(),
        rows: rows.len(),
        success_rate: successes as f64 / rows.len().max(1) as f64,
        mean_return: mean(&returns),
        min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
        max_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        prior_success_rate: prior.iter().filter(|p| p.2).count() as f64 / prior.len().max(1) as f64,
        prior_mean_return: mean(&prior_returns),
        tracks_with_handover: tracks
            .iter()
            .filter(|t| rows.iter().any(|r| r.track == **t && r.handover))
            .count(),
    }
}

/// Runs the checkpoint x track matrix and writes the row tables, the
/// per-step weight traces and the summary into `out_dir`.
pub fn transfer_protocol(checkpoints: &[PathBuf], settings: &TransferSettings, out_dir: &Path) -> Result<TransferSummary> {
    if checkpoints.is_empty() || settings.track_seeds.is_empty() {
        return Err(HarnessError::InvalidConfig("transfer needs at least one checkpoint and one track".into()));
    }
    let models = checkpoints
        .iter()
        .map(|c| LoadedCheckpoint::load(c))
        .collect::<Result<Vec<_>>>()?;
    let tracks: Vec<TrackSpec> = settings
        .track_seeds
        .iter()
        .map(|&seed| TrackSpec::Generated {
            seed,
            params: settings.track_params.clone(),
        })
        .collect();

    std::fs::create_dir_all(out_dir.join("tracks"))?;
    for (spec, seed) in tracks.iter().zip(&settings.track_seeds) {
        spec.load()?.save_json(&out_dir.join("tracks").join(format!("track-{seed}.json")))?;
    }
    let mut table = BufWriter::new(File::create(out_dir.join(TRANSFER_CSV))?);
    let mut trace_log = BufWriter::new(File::create(out_dir.join(TRANSFER_STEPS_CSV))?);
    writeln!(table, "{TRANSFER_HEADER}")?;
    writeln!(trace_log, "{TRANSFER_STEPS_HEADER}")?;

    let mut rows = Vec::with_capacity(models.len() * tracks.len());
    for (m, model) in models.iter().enumerate() {
        let lambda_max = model.manifest.adaptor.bounds().1;
        for (spec, &track_id) in tracks.iter().zip(&settings.track_seeds) {
            let mut task = model.task(Some(spec.clone()), Some(settings.episode_steps))?;
            let trace = model.evaluate(&mut task, 1, track_id)?.remove(0);
            let mut curve_min: Option<f64> = None;
            let mut reached_max = false;
            let mut handover = false;
            for (k, (&lambda, radius)) in trace.lambdas.iter().zip(&trace.radii).enumerate() {
                let on_curve = radius.is_some_and(|r| r < settings.curve_radius);
                if on_curve {
                    curve_min = Some(curve_min.map_or(lambda, |c| c.min(lambda)));
                    handover |= reached_max && lambda < lambda_max;
                }
                reached_max |= lambda >= lambda_max;
                let [x, y] = trace.positions[k].unwrap_or([f64::NAN; 2]);
                writeln!(trace_log, "{m},{track_id},{k},{x},{y},{lambda},{}", opt(*radius))?;
            }
            let row = TransferRow {
                model: m,
                track: track_id,
                ret: trace.ret,
                success: !trace.failure,
                steps: trace.steps,
                min_lambda: trace.lambdas.iter().copied().fold(f64::INFINITY, f64::min),
                curve_min_lambda: curve_min,
                handover,
            };
            writeln!(
                table,
                "{},{},{},{},{},{},{},{}",
                row.model,
                row.track,
                row.ret,
                u8::from(row.success),
                row.steps,
                row.min_lambda,
                opt(row.curve_min_lambda),
                u8::from(row.handover)
            )?;
            rows.push(row);
        }
    }
    table.flush()?;
    trace_log.flush()?;

    let mut prior = Vec::with_capacity(tracks.len());
    let mut prior_log = BufWriter::new(File::create(out_dir.join(PRIOR_CSV))?);
    writeln!(prior_log, "{PRIOR_HEADER}")?;
    for (spec, &track_id) in tracks.iter().zip(&settings.track_seeds) {
        let mut task = models[0].task(Some(spec.clone()), Some(settings.episode_steps))?;
        let trace = prior_episode(&mut task, &mut derive_stream(track_id, StreamId::Eval), ResetMode::Eval)?;
        writeln!(prior_log, "{track_id},{},{},{}", trace.ret, u8::from(!trace.failure), trace.steps)?;
        prior.push((track_id, trace.ret, !trace.failure));
    }
    prior_log.flush()?;

    let summary = summarize(checkpoints, &settings.track_seeds, &rows, &prior);
    std::fs::write(out_dir.join(TRANSFER_SUMMARY_JSON), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
