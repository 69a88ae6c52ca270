//! `netx upstream ri` and `netx upstream persistence`: effects on the
//! accounts participants repost, identified by audience-treatment doses.

use crate::util::{clusters_of_assignment, hash_input, parse_measure, parse_window, with_cleanup};
use clap::{Args, Subcommand};
use netx_core::design::Assignment;
use netx_core::error::{Error, Result};
use netx_core::io::{parse_grid, read_assignment_csv, read_posts_jsonl, write_json};
use netx_core::outcomes::{HateMeasure, PostEvent};
use netx_core::regress::Bins;
use netx_core::report::{EstimateReport, Provenance, ReportBundle};
use netx_core::rng::derive;
use netx_core::upstream::{
    build_rosters, pct_to_log, persistence_ci, persistence_ri_linear, ri_confidence_interval,
    select_upstream, upstream_ri_linear, RepostRosters, SelectionSummary,
};
use netx_core::Real;
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum UpstreamCmd {
    /// Per-percentage-point effect with an inverted exact test
    Ri(RiArgs),
    /// Carry-over fraction β conditional on an assumed during effect
    Persistence(PersistenceArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Post log (JSON lines)
    #[arg(long)]
    pub posts: PathBuf,
    /// Assignment CSV over the participant universe
    #[arg(long)]
    pub assignment: PathBuf,
    /// Pre period window START..END (baseline repost volume)
    #[arg(long)]
    pub pre: String,
    /// During period window START..END (doses and during outcomes)
    #[arg(long)]
    pub during: String,
    /// Keep at most this many accounts (ranked by participant share)
    #[arg(long, default_value_t = 400)]
    pub limit: usize,
    /// Drop accounts at or above this lifetime post volume
    #[arg(long, default_value_t = 15_000)]
    pub max_posts: u64,
    /// Replicate assignments for the exact test
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    /// Equal-count activity bins in the dose regression
    #[arg(long, default_value_t = 4)]
    pub bins: usize,
    /// Restrict to qualifying content: threshold:<c>, raw_score, keywords:<...>
    #[arg(long)]
    pub measure: Option<String>,
    /// Test level
    #[arg(long, default_value_t = 0.05)]
    pub alpha: Real,
    /// Master seed for replicate draws (default: the assignment's seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output report JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RiArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Null grid in percent change per percentage point: START:STEP:STOP
    #[arg(long, default_value = "-10:0.25:10")]
    pub grid: String,
}

#[derive(Args)]
pub struct PersistenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Post period window START..END (carry-over outcomes)
    #[arg(long)]
    pub post: String,
    /// Assumed during effects to condition on, in percent per pp: START:STEP:STOP
    #[arg(long, default_value = "-5:1:-1")]
    pub tau_grid: String,
    /// β inversion grid over [0, 1]: START:STEP:STOP (start 0, stop 1)
    #[arg(long, default_value = "0:0.01:1")]
    pub beta_grid: String,
}

pub fn upstream(cmd: UpstreamCmd) -> Result<()> {
    match cmd {
        UpstreamCmd::Ri(a) => ri(a),
        UpstreamCmd::Persistence(a) => persistence(a),
    }
}

/// Selected rosters plus the log-volume change from the pre window.
struct Prepared {
    assignment: Assignment,
    rosters: RepostRosters,
    summary: SelectionSummary,
    bins: Bins,
    /// `ln(1+reposts in window) − ln(1+reposts in pre)` per account, for the
    /// window named at construction.
    delta: Vec<Real>,
    seed: u64,
    measure: Option<HateMeasure>,
}

/// Reposts per selected account inside `window`, aligned with `rosters`.
fn window_counts(
    posts: &[PostEvent],
    rosters: &RepostRosters,
    window: (chrono::DateTime<chrono::Utc>, chrono::DateTime<chrono::Utc>),
    measure: Option<&HateMeasure>,
) -> Result<Vec<Real>> {
    let all = build_rosters(posts, &rosters.participant_ids, window, measure)?;
    Ok(rosters
        .upstream_ids
        .iter()
        .map(|id| {
            all.upstream_ids
                .binary_search(id)
                .map(|u| all.total_reposts[u])
                .unwrap_or(0.0)
        })
        .collect())
}

fn prepare(common: &CommonArgs, outcome_window: &str) -> Result<Prepared> {
    let posts = read_posts_jsonl(&common.posts)?;
    let assignment = read_assignment_csv(&common.assignment)?;
    let measure = common.measure.as_deref().map(parse_measure).transpose()?;
    let pre = parse_window(&common.pre)?;
    let during = parse_window(&common.during)?;
    let outcome = parse_window(outcome_window)?;

    let rosters_during =
        build_rosters(&posts, &assignment.ids, during, measure.as_ref())?;
    let (rosters, summary) = select_upstream(&rosters_during, common.max_posts, common.limit);
    if rosters.n() == 0 {
        return Err(Error::invalid(
            "no upstream accounts survive selection (check windows and limits)",
        ));
    }

    let base = window_counts(&posts, &rosters, pre, measure.as_ref())?;
    let now = window_counts(&posts, &rosters, outcome, measure.as_ref())?;
    let delta: Vec<Real> =
        base.iter().zip(&now).map(|(b, n)| (1.0 + n).ln() - (1.0 + b).ln()).collect();

    let activity: Vec<Real> = rosters.source_activity.iter().map(|&v| v as Real).collect();
    let bins = Bins::equal_count(&activity, common.bins)?;
    let seed = common.seed.unwrap_or(assignment.seed);
    Ok(Prepared { assignment, rosters, summary, bins, delta, seed, measure })
}

fn base_provenance(command: &str, common: &CommonArgs, p: &Prepared) -> Result<Provenance> {
    let mut prov = Provenance::new(command, Some(p.seed))
        .param("p_t", p.assignment.params.p_t)
        .param("p_hp", p.assignment.params.p_hp)
        .param("limit", common.limit)
        .param("max_posts", common.max_posts)
        .param("replicates", common.reps)
        .param("bins", common.bins)
        .param("alpha", common.alpha)
        .param(
            "selection",
            serde_json::to_value(&p.summary).expect("serializable summary"),
        );
    if let Some(m) = &p.measure {
        prov = prov.param("measure", serde_json::to_value(m).expect("serializable measure"));
    }
    hash_input(&mut prov, &common.posts)?;
    hash_input(&mut prov, &common.assignment)?;
    Ok(prov)
}

fn ri(args: RiArgs) -> Result<()> {
    let p = prepare(&args.common, &args.common.during)?;
    let clusters = clusters_of_assignment(&p.assignment)?;
    let grid_pct = parse_grid(&args.grid)?;
    let (ri, degenerate) = upstream_ri_linear(
        &p.delta,
        &p.rosters,
        &p.bins,
        &p.assignment.z,
        &clusters,
        &p.assignment.params,
        derive(p.seed, "ri", 1),
        args.common.reps,
    )?;
    let ci = ri_confidence_interval(&ri, &grid_pct, args.common.alpha)?;
    let report = EstimateReport::from_upstream_ci(
        ri.theta_obs,
        ri.p_point(0.0),
        &ci,
        p.rosters.n(),
        ri.n_replicates(),
        degenerate,
    );

    let prov = base_provenance("upstream ri", &args.common, &p)?.param("grid", args.grid.as_str());
    let bundle = ReportBundle::new(prov, vec![report]);
    with_cleanup(|t| {
        t.add(&args.common.out);
        write_json(&args.common.out, &bundle)
    })?;
    eprintln!(
        "upstream: {} accounts (of {} candidates), theta {:.5} log per pp -> {}",
        p.rosters.n(),
        p.summary.candidates,
        ri.theta_obs,
        args.common.out.display()
    );
    Ok(())
}

fn persistence(args: PersistenceArgs) -> Result<()> {
    let p = prepare(&args.common, &args.post)?;
    let clusters = clusters_of_assignment(&p.assignment)?;
    let tau_grid_pct = parse_grid(&args.tau_grid)?;
    let beta_grid = parse_grid(&args.beta_grid)?;
    if beta_grid.len() < 2 || beta_grid[0] != 0.0 || *beta_grid.last().unwrap() != 1.0 {
        return Err(Error::invalid("beta grid must run from 0 to 1"));
    }
    let beta_step = beta_grid[1] - beta_grid[0];

    let mut estimates = Vec::new();
    for (k, &tau_pct) in tau_grid_pct.iter().enumerate() {
        let tau = pct_to_log(tau_pct);
        let (ri_beta, _) = persistence_ri_linear(
            &p.delta,
            &p.rosters,
            &p.bins,
            &p.assignment.z,
            &clusters,
            &p.assignment.params,
            tau,
            derive(p.seed, "ri", 2 + k as u64),
            args.common.reps,
        )?;
        let ci = persistence_ci(&ri_beta, beta_step, args.common.alpha)?;
        let mut row = EstimateReport::from_persistence_ci(
            ri_beta.theta_obs,
            &ci,
            p.rosters.n(),
            ri_beta.n_replicates(),
        );
        row.estimand = format!("upstream_persistence_beta:tau_pct={tau_pct}");
        estimates.push(row);
    }

    let prov = base_provenance("upstream persistence", &args.common, &p)?
        .param("tau_grid", args.tau_grid.as_str())
        .param("beta_grid", args.beta_grid.as_str())
        .param("post", args.post.as_str());
    let bundle = ReportBundle::new(prov, estimates);
    with_cleanup(|t| {
        t.add(&args.common.out);
        write_json(&args.common.out, &bundle)
    })?;
    eprintln!(
        "upstream persistence: {} accounts, {} conditioning points -> {}",
        p.rosters.n(),
        tau_grid_pct.len(),
        args.common.out.display()
    );
    Ok(())
}
