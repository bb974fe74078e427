//! The desk-scale experiment protocols and their directory layout:
//! `<root>/ablation/<label>/seed-<k>`, `<root>/racing/<label>/seed-<k>` and
//! `<root>/transfer`.

use std::path::{Path, PathBuf};

use cheq_core::{Formulation, Variant, WeightConfig};

use crate::config::RunConfig;
use crate::error::Result;
use crate::logs::{Summary, CHECKPOINT_DIR};
use crate::run::train_run;
use crate::transfer::{transfer_protocol, TransferSettings, TransferSummary};

pub const ABLATION_DIR: &str = "ablation";
pub const RACING_DIR: &str = "racing";
pub const TRANSFER_DIR: &str = "transfer";

/// Label of the racing run whose checkpoints are transferred.
pub const TRANSFER_SOURCE: &str = "cheq-g5";

pub const FORMULATIONS: [Formulation; 3] = [
    Formulation::Contextualized,
    Formulation::StationaryHybrid,
    Formulation::MixedAction,
];

pub fn formulation_name(f: Formulation) -> &'static str {
    match f {
        Formulation::Contextualized => "contextualized",
        Formulation::StationaryHybrid => "stationary_hybrid",
        Formulation::MixedAction => "mixed_action",
    }
}

/// Three formulations under a fixed weight of 0.5 and under the linear
/// schedule, `seeds` seeds each.
pub fn ablation_plan(seeds: u64) -> Vec<RunConfig> {
    let base = RunConfig::profile("cartpole-ablation").expect("bundled profile");
    let mut plan = Vec::new();
    for (tag, variant) in [("fixed", Variant::FixedHybrid { lambda: 0.5 }), ("schedule", Variant::ScheduleHybrid)] {
        for f in FORMULATIONS {
            for seed in 0..seeds {
                let mut cfg = base.clone();
                cfg.label = format!("{}-{tag}", formulation_name(f));
                cfg.variant = variant.clone();
                cfg.agent.formulation = f;
                cfg.seed = seed;
                plan.push(cfg);
            }
        }
    }
    plan
}

/// CHEQ with one and five gradient rounds per step against plain SAC.
pub fn racing_plan(seeds: u64) -> Vec<RunConfig> {
    let base = RunConfig::profile("racing-small").expect("bundled profile");
    let mut plan = Vec::new();
    for (label, variant, utd) in [
        ("cheq-g1", Variant::Cheq { weights: WeightConfig::default() }, 1),
        ("cheq-g5", Variant::Cheq { weights: WeightConfig::default() }, 5),
        ("sac", Variant::Sac, 1),
    ] {
        for seed in 0..seeds {
            let mut cfg = base.clone();
            cfg.label = label.into();
            cfg.variant = variant.clone();
            cfg.agent.utd_ratio = utd;
            cfg.seed = seed;
            if label == "sac" {
                cfg.checkpoint_every = None;
            }
            plan.push(cfg);
        }
    }
    plan
}

/// Runs every configuration of `plan` below `root/subdir`. Finished runs
/// with a matching config hash are kept; stale or partial ones are redone.
pub fn run_plan(plan: &[RunConfig], root: &Path, subdir: &str, mut progress: impl FnMut(&RunConfig, &Summary, bool)) -> Result<Vec<Summary>> {
    let mut out = Vec::with_capacity(plan.len());
    for cfg in plan {
        let dir = cfg.run_dir(&root.join(subdir));
        if let Ok(existing) = Summary::load(&dir) {
            if existing.config_hash == cfg.config_hash() {
                progress(cfg, &existing, true);
                out.push(existing);
                continue;
            }
        }
        let run = train_run(cfg, &dir, true)?;
        progress(cfg, &run.summary, false);
        out.push(run.summary);
    }
    Ok(out)
}

/// Checkpoints of the transfer source run, ordered by step.
pub fn transfer_checkpoints(root: &Path) -> Result<Vec<PathBuf>> {
    let dir = root.join(RACING_DIR).join(TRANSFER_SOURCE).join("seed-0").join(CHECKPOINT_DIR);
    let mut found: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|source| crate::error::HarnessError::File { path: dir.clone(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    found.sort();
    Ok(found)
}

pub fn run_transfer(root: &Path, settings: &TransferSettings) -> Result<TransferSummary> {
    let checkpoints = transfer_checkpoints(root)?;
    transfer_protocol(&checkpoints, settings, &root.join(TRANSFER_DIR))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans_have_the_declared_shape() {
        let ablation = ablation_plan(5);
        assert_eq!(ablation.len(), 30);
        assert!(ablation.iter().all(|c| c.validate().is_ok() && c.total_steps == 100_000));
        let labels: std::collections::BTreeSet<_> = ablation.iter().map(|c| c.label.clone()).collect();
        assert_eq!(labels.len(), 6);
        let racing = racing_plan(3);
        assert_eq!(racing.len(), 9);
        for c in &racing {
            let (agent, _) = c.assemble().unwrap();
            match c.label.as_str() {
                "sac" => assert_eq!((agent.ensemble_size, agent.utd_ratio), (2, 1)),
                "cheq-g5" => assert_eq!((agent.ensemble_size, agent.subset_size, agent.utd_ratio), (5, 2, 5)),
                _ => assert_eq!((agent.ensemble_size, agent.utd_ratio), (5, 1)),
            }
        }
        let hashes: std::collections::BTreeSet<_> = racing.iter().map(RunConfig::config_hash).collect();
        assert_eq!(hashes.len(), 9);
    }
}
