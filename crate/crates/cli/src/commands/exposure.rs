//! `netx exposure`: q-fraction neighborhood conditions, Monte Carlo
//! propensities, and Hájek-weighted condition means.

use crate::util::{align_ids, hash_input, with_cleanup};
use clap::Args;
use netx_core::error::{Error, Result};
use netx_core::exposure::{classify_exposure, hajek_estimate, mc_exposure_propensities, HajekOptions};
use netx_core::io::{read_assignment_csv, read_edges_csv, read_panel_csv, write_json};
use netx_core::netgraph::{ClusterAssignment, InteractionGraph};
use netx_core::report::{exposure_reports, Provenance, ReportBundle};
use netx_core::rng::derive;
use netx_core::Real;
use std::path::PathBuf;

#[derive(Args)]
pub struct ExposureArgs {
    /// Panel CSV (deltas are the outcome)
    #[arg(long)]
    pub panel: PathBuf,
    /// Assignment CSV
    #[arg(long)]
    pub assignment: PathBuf,
    /// Edge list CSV the neighborhoods come from
    #[arg(long)]
    pub graph: PathBuf,
    /// Weight fraction defining high exposure
    #[arg(long, default_value_t = 0.75)]
    pub q: Real,
    /// Monte Carlo replicates for condition propensities
    #[arg(long, default_value_t = 50_000)]
    pub reps: u64,
    /// Keep each node's top-k outgoing / incoming edges
    #[arg(long, default_value_t = 10)]
    pub k_out: usize,
    #[arg(long, default_value_t = 10)]
    pub k_in: usize,
    /// Drop units whose observed-condition propensity is below this
    #[arg(long, default_value_t = 1e-4)]
    pub trim: Real,
    /// Equal-count baseline bins in the weighted regression (0 = none)
    #[arg(long, default_value_t = 0)]
    pub bins: usize,
    /// Master seed for the propensity draws (default: the assignment's seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output report JSON
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exposure(args: ExposureArgs) -> Result<()> {
    let panel = read_panel_csv(&args.panel)?;
    let a = read_assignment_csv(&args.assignment)?;
    let graph = InteractionGraph::from_weighted_edges(read_edges_csv(&args.graph)?)?;
    let pruned = graph.prune(args.k_out, args.k_in);
    let g = pruned.as_graph();

    // estimation universe = graph nodes; everything else must cover it
    let units: Vec<String> = g.ids().to_vec();
    let in_assignment = align_ids(&a.ids, &units, "the assignment")?;
    let in_panel = align_ids(&panel.ids, &units, "the panel")?;
    let z: Vec<bool> = in_assignment.iter().map(|&i| a.z[i]).collect();
    let delta: Vec<Real> = in_panel.iter().map(|&i| panel.delta_during[i]).collect();
    let baseline: Vec<Real> = in_panel.iter().map(|&i| panel.y_pre[i]).collect();
    let cluster_of: Vec<u32> = in_assignment.iter().map(|&i| a.cluster_of[i]).collect();
    let clusters = ClusterAssignment::from_pairs(
        units
            .iter()
            .zip(&cluster_of)
            .map(|(id, &c)| (id.clone(), c as u64, false))
            .collect(),
    )?;

    let seed = args.seed.unwrap_or(a.seed);
    let class = classify_exposure(g, &z, args.q)?;
    let props =
        mc_exposure_propensities(g, &clusters, &a.params, args.q, args.reps, derive(seed, "mc", 0))?;
    if props.replicates == 0 {
        return Err(Error::numerical("no propensity replicates drawn"));
    }
    let est = hajek_estimate(
        &delta,
        Some(&baseline),
        &class,
        &props,
        &cluster_of,
        Some(&pruned),
        &HajekOptions { trim_threshold: args.trim, bins: args.bins },
    )?;

    let mut prov = Provenance::new("exposure", Some(seed))
        .param("q", args.q)
        .param("mc_replicates", args.reps)
        .param("p_t", a.params.p_t)
        .param("p_hp", a.params.p_hp)
        .param("k_out", args.k_out)
        .param("k_in", args.k_in)
        .param("trim_threshold", args.trim)
        .param("bins", args.bins)
        .param("n_units", units.len());
    hash_input(&mut prov, &args.panel)?;
    hash_input(&mut prov, &args.assignment)?;
    hash_input(&mut prov, &args.graph)?;

    let bundle = ReportBundle::new(prov, exposure_reports(&est));
    with_cleanup(|t| {
        t.add(&args.out);
        write_json(&args.out, &bundle)
    })?;
    eprintln!(
        "exposure: {} units used, {} trimmed ({} zero-propensity), {} unclassified -> {}",
        est.n_used,
        est.trimmed,
        est.zero_propensity,
        est.unclassified,
        args.out.display()
    );
    Ok(())
}
