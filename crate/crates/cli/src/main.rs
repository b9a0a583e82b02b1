mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "reentry", version, about = "Eikonal activation and re-entry simulation on triangle meshes")]
pub struct Cli {
    /// Where results are written.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Accepted for reproducibility bookkeeping; every algorithm is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print only a JSON summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the acuteness condition of every triangle under the tissue metrics.
    Audit {
        /// Mesh JSON, or `square:SIDE:H` / `annulus:R_IN:R_OUT:H`.
        mesh: String,
        /// Directory of restitution table sidecars (`*.json`).
        #[arg(long)]
        tables: PathBuf,
        /// Number of failing triangles to list.
        #[arg(long, default_value_t = 10)]
        worst: usize,
    },
    /// Single activation map from point sources.
    Solve {
        mesh: String,
        /// Longitudinal CV in cm/s.
        #[arg(long)]
        cv_l: f64,
        /// Transverse to longitudinal CV ratio.
        #[arg(long, default_value_t = 1.0)]
        ratio: f64,
        /// `mesh` to keep the mesh fibers, or a uniform direction `X,Y[,Z]`.
        #[arg(long, default_value = "mesh")]
        fiber_source: String,
        /// Comma-separated `NODE` or `NODE:T_MS` entries.
        #[arg(long, required = true)]
        sources: String,
        /// Edge-only Dijkstra baseline instead of fast marching.
        #[arg(long)]
        dijkstra: bool,
    },
    /// Run scenarios end to end, writing snapshots and the event log.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Scenarios run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Generate APD and CV restitution tables from ionic parameters.
    Restitution { params: PathBuf },
    /// Compare one column of two CSV field files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "phi")]
        field: String,
        /// Only compare nodes finite in both files.
        #[arg(long)]
        finite_only: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::dispatch(&cli) {
        Ok(summary) => {
            if cli.quiet {
                println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            } else {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.quiet {
                println!("{}", serde_json::json!({ "ok": false, "error": format!("{e:#}") }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
