//! Command-line driver for the induction-head experiments.
//!
//! Subcommands build explicit constructions (`construct`, `kernel`), integrate
//! the reduced gradient flow (`gf`), train the reduced model online (`sgd`),
//! probe first-layer representations (`probe`) and run the acceptance suite
//! (`verify`). Every run writes its outputs and a `manifest.json` under `--out`.
//!
//! Exit codes: [`EXIT_OK`], [`EXIT_USAGE`] for usage and validation errors, and
//! [`EXIT_ACCEPTANCE`] when `verify` sees a failing criterion.

pub mod acceptance;
mod app;
mod commands;
mod manifest;

pub use app::{run, Cli, Command};
pub use manifest::Manifest;

/// Successful run.
pub const EXIT_OK: i32 = 0;
/// Bad flags, bad config file, invalid parameters or failed I/O.
pub const EXIT_USAGE: i32 = 1;
/// At least one acceptance criterion failed.
pub const EXIT_ACCEPTANCE: i32 = 2;
