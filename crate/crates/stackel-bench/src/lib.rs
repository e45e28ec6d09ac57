//! Experiment harness for `stackel-core`: run manifests, output files and the
//! `stackel` subcommands.

pub mod commands;
pub mod manifest;
pub mod output;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "STACKEL_OUT";
