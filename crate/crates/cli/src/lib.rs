//! Library surface of the experiment CLI, exposed so integration tests can
//! drive commands directly.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod selftest;

pub use commands::{
    cmd_bounds, cmd_construct_pd, cmd_construct_sd, cmd_diag_flatness, cmd_diag_lattice_gaussian,
    cmd_eval, cmd_nsm, cmd_rcc, cmd_selftest,
};
pub use config::RunConfig;
pub use error::{CliError, Result};
