//! `netx`: design-based experiments on interaction networks.
//!
//! Exit codes form a stable contract: 0 on success, 2 for input or
//! validation problems, 3 for numerical failures. Worker count is a
//! tuning knob only — results are bit-identical for any value.

mod commands;
mod util;

use clap::{Parser, Subcommand};
use netx_core::error::Result;

#[derive(Parser)]
#[command(
    name = "netx",
    version,
    about = "Cluster-randomized experiments on interaction networks: \
             clustering, assignment, estimation, and validation",
    propagate_version = true
)]
struct Cli {
    /// Worker threads (default: NETX_WORKERS, then all cores). Never
    /// affects results, only speed.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster an interaction graph into well-separated groups
    Cluster(commands::graph::ClusterArgs),
    /// Draw a two-stage randomized assignment over clusters
    Assign(commands::design::AssignArgs),
    /// Closed-form assignment propensities, optionally cross-checked by enumeration
    Propensity(commands::design::PropensityArgs),
    /// Build the per-user monthly outcome panel from a post log
    Panel(commands::panel::PanelArgs),
    /// Effect estimation on a built panel
    #[command(subcommand)]
    Estimate(commands::direct::EstimateCmd),
    /// Neighborhood-exposure condition means and contrasts
    Exposure(commands::exposure::ExposureArgs),
    /// Upstream-account effect and carry-over analyses
    #[command(subcommand)]
    Upstream(commands::upstream::UpstreamCmd),
    /// Carry-over of the during-period change into the post period
    Persistence(commands::persistence::PersistenceArgs),
    /// Behavioral analytics over post logs
    #[command(subcommand)]
    Analytics(commands::analytics::AnalyticsCmd),
    /// Generate a synthetic experiment with recorded ground truth
    Simulate(commands::simulate::SimulateArgs),
    /// Run the self-validation battery
    Validate(commands::validate::ValidateArgs),
    /// Execute the full pipeline described by a config file
    Run(commands::pipeline::RunArgs),
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cluster(a) => commands::graph::cluster(a),
        Command::Assign(a) => commands::design::assign(a),
        Command::Propensity(a) => commands::design::propensity(a),
        Command::Panel(a) => commands::panel::panel(a),
        Command::Estimate(c) => commands::direct::estimate(c),
        Command::Exposure(a) => commands::exposure::exposure(a),
        Command::Upstream(c) => commands::upstream::upstream(c),
        Command::Persistence(a) => commands::persistence::persistence(a),
        Command::Analytics(c) => commands::analytics::analytics(c),
        Command::Simulate(a) => commands::simulate::simulate(a),
        Command::Validate(a) => commands::validate::validate(a),
        Command::Run(a) => commands::pipeline::run(a),
    }
}

fn main() {
    let cli = Cli::parse();
    let workers = cli.workers.or_else(|| {
        std::env::var("NETX_WORKERS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        // best effort: a zero just means "let rayon decide"
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
