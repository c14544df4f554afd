//! Configuration, experiment drivers and artifact writers for the
//! `nanowire` command-line tool.

// `!(x > 0.0)` is how NaN gets rejected alongside nonpositive input.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run_command, CliError, Context, Verb};
pub use config::{load_config, parse_config, LoadedConfig, RunConfig};
