//! Per-run metric files: four CSV streams, checkpoints and a JSON summary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cheq_core::checkpoint::save_bundle;
use cheq_core::train::{EpisodeRecord, EvalRecord, StepRecord, UpdateRecord};
use cheq_core::{MixingKind, Recorder, SacEnsembleAgent, WeightAdaptor};

use crate::error::{HarnessError, Result};

pub const STEPS_CSV: &str = "steps.csv";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const UPDATES_CSV: &str = "updates.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CONFIG_JSON: &str = "config.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub const STEPS_HEADER: &str = "step,lambda,uncertainty,reward";
pub const EPISODES_HEADER: &str = "episode,end_step,return,failure,cum_failures";
pub const EVAL_HEADER: &str = "step,return,failure";
pub const UPDATES_HEADER: &str = "step,critic_loss_mean,actor_obj,alpha";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub final_return: f64,
    pub cum_failures: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<f64>,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub steps: u64,
    #[serde(default)]
    pub episodes: u64,
    #[serde(default)]
    pub gradient_rounds: u64,
}

impl Summary {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(SUMMARY_JSON);
        Ok(serde_json::from_str(&crate::error::read_file(&path)?)?)
    }
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

/// Writes the metric streams of one run and saves checkpoint bundles below
/// `<run>/checkpoints/step-XXXXXXXX`.
pub struct CsvRecorder {
    steps: BufWriter<File>,
    episodes: BufWriter<File>,
    evals: BufWriter<File>,
    updates: BufWriter<File>,
    run_dir: PathBuf,
    adaptor: WeightAdaptor,
    mixing: MixingKind,
    meta: serde_json::Value,
}

impl CsvRecorder {
    /// Truncates any existing streams in `run_dir`.
    pub fn create(run_dir: &Path, adaptor: WeightAdaptor, mixing: MixingKind, meta: serde_json::Value) -> Result<Self> {
        std::fs::create_dir_all(run_dir)?;
        let open = |name: &str, header: &str| -> Result<BufWriter<File>> {
            let mut w = BufWriter::new(File::create(run_dir.join(name))?);
            writeln!(w, "{header}")?;
            Ok(w)
        };
        Ok(Self {
            steps: open(STEPS_CSV, STEPS_HEADER)?,
            episodes: open(EPISODES_CSV, EPISODES_HEADER)?,
            evals: open(EVAL_CSV, EVAL_HEADER)?,
            updates: open(UPDATES_CSV, UPDATES_HEADER)?,
            run_dir: run_dir.to_path_buf(),
            adaptor,
            mixing,
            meta,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        for w in [&mut self.steps, &mut self.episodes, &mut self.evals, &mut self.updates] {
            w.flush()?;
        }
        Ok(())
    }
}

pub fn checkpoint_dir(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join(CHECKPOINT_DIR).join(format!("step-{step:08}"))
}

impl Recorder for CsvRecorder {
    fn step(&mut self, r: &StepRecord) -> cheq_core::Result<()> {
        writeln!(self.steps, "{},{},{},{}", r.step, r.lambda, r.uncertainty, r.reward)?;
        Ok(())
    }

    fn episode(&mut self, r: &EpisodeRecord) -> cheq_core::Result<()> {
        writeln!(
            self.episodes,
            "{},{},{},{},{}",
            r.episode,
            r.end_step,
            r.ret,
            flag(r.failure),
            r.cum_failures
        )?;
        Ok(())
    }

    fn eval(&mut self, r: &EvalRecord) -> cheq_core::Result<()> {
        writeln!(self.evals, "{},{},{}", r.step, r.ret, flag(r.failure))?;
        Ok(())
    }

    fn update(&mut self, r: &UpdateRecord) -> cheq_core::Result<()> {
        writeln!(self.updates, "{},{},{},{}", r.step, r.critic_loss_mean, r.actor_obj, r.alpha)?;
        Ok(())
    }

    fn checkpoint(&mut self, step: u64, agent: &SacEnsembleAgent) -> cheq_core::Result<()> {
        save_bundle(
            &checkpoint_dir(&self.run_dir, step),
            agent,
            step,
            &self.adaptor,
            self.mixing,
            self.meta.clone(),
        )
    }
}

/// A CSV file read back as its header and rows of parsed numbers; empty
/// fields read as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let bad = |reason: String| HarnessError::Artifact {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::open(path).map_err(|source| HarnessError::File {
            path: path.to_path_buf(),
            source,
        })?;
        let mut lines = BufReader::new(file).lines();
        let header: Vec<String> = match lines.next() {
            Some(line) => line?.split(',').map(str::to_owned).collect(),
            None => return Err(bad("empty file".into())),
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let row = line
                .split(',')
                .map(|f| if f.is_empty() { Ok(f64::NAN) } else { f.parse::<f64>() })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            if row.len() != header.len() {
                return Err(bad(format!("row {} has {} fields, header has {}", i + 1, row.len(), header.len())));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Cumulative training failures after `step`, from `episodes.csv` rows.
pub fn cum_failures_at(episodes: &Table, step: u64) -> u64 {
    let end = episodes.column("end_step").unwrap_or_default();
    let cum = episodes.column("cum_failures").unwrap_or_default();
    end.iter()
        .zip(&cum)
        .take_while(|(e, _)| **e <= step as f64)
        .last()
        .map_or(0, |(_, c)| *c as u64)
}
