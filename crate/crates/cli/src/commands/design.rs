//! `netx assign` and `netx propensity`.

use crate::util::with_cleanup;
use clap::Args;
use netx_core::design::{enumerate_design, propensities, DesignParams};
use netx_core::error::Result;
use netx_core::io::{read_clusters_csv, write_assignment_csv, write_json};
use netx_core::Real;
use serde_json::json;
use std::path::PathBuf;

#[derive(Args)]
pub struct AssignArgs {
    /// Clusters CSV from `netx cluster`
    #[arg(long)]
    pub clusters: PathBuf,
    /// Cluster-level treatment probability
    #[arg(long, default_value_t = 0.5)]
    pub pt: Real,
    /// Per-user flip probability (hole punching)
    #[arg(long, default_value_t = 0.18)]
    pub php: Real,
    /// Master seed of the assignment draw
    #[arg(long)]
    pub seed: u64,
    /// Output assignment CSV (meta sidecar written alongside)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn assign(args: AssignArgs) -> Result<()> {
    let clusters = read_clusters_csv(&args.clusters)?;
    let params = DesignParams::new(args.pt, args.php)?;
    let a = netx_core::design::assign(&clusters, &params, args.seed);
    with_cleanup(|t| {
        t.add_with_meta(&args.out);
        write_assignment_csv(&args.out, &a)
    })?;
    eprintln!(
        "assigned {} users in {} clusters ({} treated) -> {}",
        a.ids.len(),
        clusters.n_clusters(),
        a.z.iter().filter(|&&z| z).count(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct PropensityArgs {
    /// Cluster-level treatment probability
    #[arg(long)]
    pub pt: Real,
    /// Per-user flip probability (hole punching)
    #[arg(long)]
    pub php: Real,
    /// Cross-check every closed-form cell against full enumeration of this
    /// clustering (needs ≤ 20 users)
    #[arg(long, value_name = "CLUSTERS_CSV")]
    pub enumerate: Option<PathBuf>,
    /// Write the table here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn propensity(args: PropensityArgs) -> Result<()> {
    let params = DesignParams::new(args.pt, args.php)?;
    let t = propensities(&params);
    let joint = |same: bool| {
        json!({
            "treated_treated": t.joint(same, true, true),
            "treated_control": t.joint(same, true, false),
            "control_treated": t.joint(same, false, true),
            "control_control": t.joint(same, false, false),
        })
    };
    let p = t.marginal(true);
    let corr = (t.joint(true, true, true) - p * p) / (p * (1.0 - p));
    let mut doc = json!({
        "params": { "p_t": params.p_t, "p_hp": params.p_hp },
        "marginal": { "treated": p, "control": t.marginal(false) },
        "joint_same_cluster": joint(true),
        "joint_cross_cluster": joint(false),
        "same_cluster_correlation": corr,
    });

    if let Some(path) = &args.enumerate {
        let clusters = read_clusters_csv(path)?;
        let dist = enumerate_design(&clusters, &params)?;
        let mut worst: Real = 0.0;
        for i in 0..clusters.n() {
            for v in [true, false] {
                worst = worst.max((dist.exact_marginal(i, v) - t.marginal(v)).abs());
            }
            for j in (i + 1)..clusters.n() {
                let same = clusters.cluster_of[i] == clusters.cluster_of[j];
                for v1 in [true, false] {
                    for v2 in [true, false] {
                        worst = worst
                            .max((dist.exact_joint(i, j, v1, v2) - t.joint(same, v1, v2)).abs());
                    }
                }
            }
        }
        doc["enumeration_check"] = json!({
            "n": clusters.n(),
            "n_clusters": clusters.n_clusters(),
            "max_abs_deviation": worst,
        });
    }

    match &args.out {
        Some(path) => with_cleanup(|t| {
            t.add(path);
            write_json(path, &doc)
        }),
        None => {
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable table"));
            Ok(())
        }
    }
}
