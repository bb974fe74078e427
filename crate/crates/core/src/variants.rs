//! Named algorithm variants assembled from the shared agent and loop settings.

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, Formulation, QReduction};
use crate::error::{CoreError, Result};
use crate::hybrid::{WeightAdaptor, WeightConfig};
use crate::train::TrainSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Variant {
    /// Uncertainty-adapted weight with a masked critic ensemble.
    Cheq {
        #[serde(default)]
        weights: WeightConfig,
    },
    /// Two critics, no prior.
    Sac,
    /// Five critics, UTD 20, no prior.
    Redq,
    FixedHybrid { lambda: f64 },
    /// Weight rises linearly from 0 to 1 over the run.
    ScheduleHybrid,
    CoreHybrid {
        #[serde(default = "core_a")]
        a: f64,
        #[serde(default = "core_c")]
        c: f64,
    },
}

fn core_a() -> f64 {
    7.0
}

fn core_c() -> f64 {
    0.02
}

impl Default for Variant {
    fn default() -> Self {
        Self::Cheq {
            weights: WeightConfig::default(),
        }
    }
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Self::Cheq { .. } => "cheq".into(),
            Self::Sac => "sac".into(),
            Self::Redq => "redq".into(),
            Self::FixedHybrid { lambda } => format!("fixed-{lambda}"),
            Self::ScheduleHybrid => "schedule".into(),
            Self::CoreHybrid { .. } => "core".into(),
        }
    }

    pub fn uses_prior(&self) -> bool {
        !matches!(self, Self::Sac | Self::Redq)
    }

    /// Applies the variant to `agent` and `settings`. Ensemble size, subset
    /// size and UTD ratio of `agent` are kept for the hybrid variants and
    /// overridden for the plain baselines.
    pub fn assemble(&self, mut agent: AgentConfig, mut settings: TrainSettings) -> Result<(AgentConfig, TrainSettings)> {
        settings.adaptor = match self {
            Self::Cheq { weights } => WeightAdaptor::Cheq(*weights),
            Self::Sac | Self::Redq => WeightAdaptor::Fixed { lambda: 1.0 },
            Self::FixedHybrid { lambda } => WeightAdaptor::Fixed { lambda: *lambda },
            Self::ScheduleHybrid => WeightAdaptor::Schedule {
                horizon: settings.total_steps,
            },
            Self::CoreHybrid { a, c } => WeightAdaptor::Core { a: *a, c: *c },
        };
        match self {
            Self::Sac => {
                agent.ensemble_size = 2;
                agent.subset_size = 2;
                agent.utd_ratio = 1;
                agent.mask_rate = 1.0;
                agent.actor_q = QReduction::Min;
            }
            Self::Redq => {
                agent.ensemble_size = 5;
                agent.subset_size = 2;
                agent.utd_ratio = 20;
                agent.mask_rate = 1.0;
                agent.actor_q = QReduction::Mean;
            }
            Self::Cheq { .. } if agent.ensemble_size < 2 => {
                return Err(CoreError::InvalidConfig(
                    "uncertainty-adapted weighting needs at least two critics".into(),
                ));
            }
            Self::FixedHybrid { .. } | Self::ScheduleHybrid | Self::CoreHybrid { .. } => {
                agent.mask_rate = 1.0;
            }
            Self::Cheq { .. } => {}
        }
        if !self.uses_prior() && agent.formulation != Formulation::Contextualized {
            return Err(CoreError::InvalidConfig(format!(
                "{} has no prior, so the {:?} formulation is meaningless",
                self.label(),
                agent.formulation
            )));
        }
        agent.validate()?;
        settings.validate()?;
        Ok((agent, settings))
    }
}
