//! Command implementations behind the `genrefuse` binary.
//!
//! Each `cmd_*` function takes a [`RunConfig`] and returns its result as a
//! value; the binary only parses arguments and prints.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_compare, cmd_evaluate, cmd_predict, cmd_stats, cmd_synth, cmd_train, format_predictions,
    ArtifactPaths, CompareTable, RowModel,
};
pub use config::{Paths, RunConfig};
