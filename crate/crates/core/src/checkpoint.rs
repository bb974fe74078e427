//! Agent checkpoint bundle: a `manifest.json` plus a binary `weights.bin`
//! holding the actor, critics, targets, temperature and all optimizer states.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use cheq_nn::checkpoint::{read_adam, read_network, read_vector, write_adam, write_network, write_vector};

use crate::agent::{AgentConfig, SacEnsembleAgent};
use crate::error::{CoreError, Result};
use crate::hybrid::{MixingKind, WeightAdaptor};

pub const BUNDLE_FORMAT: &str = "cheq-agent";
pub const BUNDLE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub step: u64,
    pub gradient_rounds: u64,
    pub actor_updates: u64,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub input_scale: Vec<f64>,
    pub agent: AgentConfig,
    pub adaptor: WeightAdaptor,
    pub mixing: MixingKind,
    /// Opaque run metadata supplied by the caller.
    #[serde(default)]
    pub run: serde_json::Value,
}

pub fn save_bundle(
    dir: &Path,
    agent: &SacEnsembleAgent,
    step: u64,
    adaptor: &WeightAdaptor,
    mixing: MixingKind,
    run: serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        step,
        gradient_rounds: agent.gradient_rounds,
        actor_updates: agent.actor_updates,
        obs_dim: agent.obs_dim(),
        action_dim: agent.action_dim(),
        input_scale: agent.input_scale().to_vec(),
        agent: agent.config().clone(),
        adaptor: adaptor.clone(),
        mixing,
        run,
    };
    let mut w = BufWriter::new(File::create(dir.join(WEIGHTS_FILE))?);
    write_network(&mut w, &agent.actor)?;
    write_adam(&mut w, &agent.actor_opt)?;
    for e in 0..agent.critics.len() {
        write_network(&mut w, &agent.critics[e])?;
        write_adam(&mut w, &agent.critic_opts[e])?;
        write_network(&mut w, &agent.targets[e])?;
    }
    write_vector(&mut w, &[agent.log_alpha])?;
    write_adam(&mut w, &agent.alpha_opt)?;
    w.flush()?;
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CoreError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format != BUNDLE_FORMAT || m.version != BUNDLE_VERSION {
        return Err(CoreError::Checkpoint(format!(
            "unsupported bundle {} v{}",
            m.format, m.version
        )));
    }
    Ok(m)
}

pub fn load_bundle(dir: &Path) -> Result<(SacEnsembleAgent, Manifest)> {
    let m = load_manifest(dir)?;
    // shapes come from the manifest; the weights then overwrite the fresh init
    let mut agent = SacEnsembleAgent::new(
        m.agent.clone(),
        m.obs_dim,
        m.action_dim,
        m.input_scale.clone(),
        &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
    )?;
    let mut r = BufReader::new(File::open(dir.join(WEIGHTS_FILE))?);
    let shape_check = |loaded: &cheq_nn::Network, expected: &cheq_nn::Network, what: &str| {
        if loaded.layer_sizes() != expected.layer_sizes() {
            return Err(CoreError::Checkpoint(format!(
                "{what} shape {:?} does not match manifest {:?}",
                loaded.layer_sizes(),
                expected.layer_sizes()
            )));
        }
        Ok(())
    };
    let actor = read_network(&mut r)?;
    shape_check(&actor, &agent.actor, "actor")?;
    agent.actor = actor;
    agent.actor_opt = read_adam(&mut r)?;
    for e in 0..agent.critics.len() {
        let critic = read_network(&mut r)?;
        shape_check(&critic, &agent.critics[e], "critic")?;
        agent.critics[e] = critic;
        agent.critic_opts[e] = read_adam(&mut r)?;
        let target = read_network(&mut r)?;
        shape_check(&target, &agent.targets[e], "target")?;
        agent.targets[e] = target;
    }
    let la = read_vector(&mut r)?;
    if la.len() != 1 || !la[0].is_finite() {
        return Err(CoreError::Checkpoint("bad temperature record".into()));
    }
    agent.log_alpha = la[0];
    agent.alpha_opt = read_adam(&mut r)?;
    agent.gradient_rounds = m.gradient_rounds;
    agent.actor_updates = m.actor_updates;
    Ok((agent, m))
}
