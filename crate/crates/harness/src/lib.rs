//! Configuration, seeding, metric logging, checkpoint evaluation and the
//! experiment protocols behind the `cheq` command-line tool.

pub mod config;
pub mod error;
pub mod experiments;
pub mod logs;
pub mod run;
pub mod transfer;

pub use config::{AnyTask, EnvSpec, RunConfig, TrackSpec, OUT_DIR_ENV, PROFILES, SCHEMA_VERSION};
pub use error::{HarnessError, Result};
pub use logs::{CsvRecorder, Summary, Table};
pub use run::{seed_everything, train_run, LoadedCheckpoint, RunOutput, SeedHierarchy};
pub use transfer::{transfer_protocol, TransferRow, TransferSettings, TransferSummary};
