//! Argument parsing and exit codes: 0 success, 1 usage or configuration
//! error, 2 solver or i/o failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, CommandError};
use crate::config::load_config;

#[derive(Debug, Parser)]
#[command(
    name = "bubbletower",
    version,
    about = "Sign-changing tower solutions and their heat flow"
)]
pub struct Cli {
    /// `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root directory for run directories.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the k-nodal stationary solution.
    Tower(Problem),
    /// First eigenpair of the linearization and the sign condition.
    Eig(Problem),
    /// Limit eigenvalue of the bubble linearization on R^N.
    Limit(Problem),
    /// Evolve the heat flow from lambda times the tower.
    Flow(Problem),
    /// Classify the flow over k_list x eps_list x lambda_list.
    Sweep(Problem),
    /// Fast invariant suite; exits 0 when every check passes.
    Verify,
    /// Collate run manifests under a root into report.csv.
    Report {
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Problem {
    #[arg(long = "N")]
    pub dim: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long = "M")]
    pub intervals: Option<String>,
    #[arg(long)]
    pub grading: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub t_end: Option<String>,
    #[arg(long)]
    pub dt_max: Option<String>,
    #[arg(long)]
    pub integrator: Option<String>,
    #[arg(long)]
    pub eps_list: Option<String>,
    #[arg(long)]
    pub lambda_list: Option<String>,
    #[arg(long)]
    pub k_list: Option<String>,
    #[arg(long)]
    pub radii: Option<String>,
    #[arg(long)]
    pub spacing: Option<String>,
}

impl Problem {
    fn overrides(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("N", &self.dim),
            ("k", &self.k),
            ("eps", &self.eps),
            ("M", &self.intervals),
            ("grading", &self.grading),
            ("lambda", &self.lambda),
            ("t_end", &self.t_end),
            ("dt_max", &self.dt_max),
            ("integrator", &self.integrator),
            ("eps_list", &self.eps_list),
            ("lambda_list", &self.lambda_list),
            ("k_list", &self.k_list),
            ("radii", &self.radii),
            ("spacing", &self.spacing),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn dispatch(cli: &Cli) -> Result<String, CommandError> {
    let file = cli.config.as_deref();
    let load = |problem: &Problem| -> Result<_, CommandError> {
        let mut overrides = problem.overrides();
        if let Some(dir) = &cli.out_dir {
            overrides.insert("out_dir".into(), dir.display().to_string());
        }
        Ok(load_config(file, &overrides)?)
    };
    match &cli.command {
        Command::Tower(p) => commands::tower(&load(p)?, file),
        Command::Eig(p) => commands::eig(&load(p)?, file),
        Command::Limit(p) => commands::limit(&load(p)?, file),
        Command::Flow(p) => commands::flow(&load(p)?, file),
        Command::Sweep(p) => commands::sweep(&load(p)?, file),
        Command::Verify => commands::verify(&load(&Problem::default())?),
        Command::Report { root } => {
            let root = match (root, &cli.out_dir) {
                (Some(r), _) | (None, Some(r)) => r.clone(),
                (None, None) => load(&Problem::default())?.out_dir,
            };
            commands::report(Path::new(&root))
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 1 {
                eprintln!("usage: bubbletower [--config FILE] [--out-dir DIR] <tower|eig|limit|flow|sweep|verify|report> [flags]");
            }
            e.exit_code()
        }
    }
}
