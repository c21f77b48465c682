//! Library behind the `sae` command line tool: configuration, snapshot
//! files and the data generation, training, evaluation, baseline, timing
//! and report commands.

pub mod config;
pub mod data;
pub mod evaluate;
pub mod report;
pub mod snapshot_file;
pub mod speed;
pub mod train;

pub use config::{RunConfig, VariantFlags};
pub use snapshot_file::SnapshotFile;
