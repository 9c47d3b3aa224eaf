//! Desk-side tooling around `vahedge-core`: TOML run configurations, weight
//! files and CSV reports, a rayon scenario runner, and the pipeline behind the
//! `vahedge` command line.

pub mod commands;
pub mod config;
pub mod io;
pub mod parallel;

pub use config::{HedgerKind, RunConfig};
pub use parallel::Parallel;
