//! `netx persistence`: slope of the post-period change on the during-period
//! change, cluster-robust.

use crate::util::{align_ids, hash_input, with_cleanup};
use clap::Args;
use netx_core::error::Result;
use netx_core::io::{read_clusters_csv, read_panel_csv, write_json};
use netx_core::persistence::estimate_persistence;
use netx_core::report::{EstimateReport, Provenance, ReportBundle};
use std::path::PathBuf;

#[derive(Args)]
pub struct PersistenceArgs {
    /// Panel CSV from `netx panel`
    #[arg(long)]
    pub panel: PathBuf,
    /// Clusters CSV (or an assignment CSV's user_id,cluster columns)
    #[arg(long)]
    pub clusters: PathBuf,
    /// Equal-count baseline bins absorbed as fixed effects
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Output report JSON
    #[arg(long)]
    pub out: PathBuf,
}

pub fn persistence(args: PersistenceArgs) -> Result<()> {
    let panel = read_panel_csv(&args.panel)?;
    let clusters = read_clusters_csv(&args.clusters)?;
    let idx = align_ids(&clusters.ids, &panel.ids, "the clustering")?;
    let cluster_of: Vec<u32> = idx.iter().map(|&i| clusters.cluster_of[i]).collect();

    let est = estimate_persistence(&panel, &cluster_of, args.bins)?;
    let mut prov = Provenance::new("persistence", None)
        .param("bins", args.bins)
        .param("n_clusters", est.n_clusters);
    hash_input(&mut prov, &args.panel)?;
    hash_input(&mut prov, &args.clusters)?;

    let bundle = ReportBundle::new(prov, vec![EstimateReport::from_persistence(&est)]);
    with_cleanup(|t| {
        t.add(&args.out);
        write_json(&args.out, &bundle)
    })?;
    eprintln!(
        "persistence: beta {:.4} (se {:.4}) on {} users -> {}",
        est.beta,
        est.std_error,
        est.n,
        args.out.display()
    );
    Ok(())
}
