//! Command line driver for the bubbletower solvers: configuration, run
//! directories with manifests, and the subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
