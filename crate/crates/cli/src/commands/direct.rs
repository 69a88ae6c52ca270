//! `netx estimate direct`: intention-to-treat effects on the panel.

use crate::util::{hash_input, with_cleanup};
use clap::{Args, Subcommand};
use netx_core::design::{propensities, Assignment};
use netx_core::direct::{ate_difference, monthly_ri, subgroup_ate, tot_wald, MonthlyRiOptions};
use netx_core::error::{Error, Result};
use netx_core::io::{read_assignment_csv, read_panel_csv, write_json};
use netx_core::outcomes::{OutcomePanel, Period};
use netx_core::report::{EstimateReport, Provenance, ReportBundle};
use netx_core::rng::derive;
use netx_core::Real;
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum EstimateCmd {
    /// Difference estimator with conservative design variance
    Direct(DirectArgs),
}

#[derive(Args)]
pub struct DirectArgs {
    /// Panel CSV from `netx panel`
    #[arg(long)]
    pub panel: PathBuf,
    /// Assignment CSV from `netx assign`
    #[arg(long)]
    pub assignment: PathBuf,
    /// Also estimate within a baseline split: median_activity or
    /// median_hate_share, optionally suffixed :low / :high
    #[arg(long)]
    pub subgroup: Option<String>,
    /// Add month-by-month randomization inference
    #[arg(long)]
    pub monthly_ri: bool,
    /// Replicates for randomization inference
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    /// Baseline bins for the monthly statistic
    #[arg(long, default_value_t = 6)]
    pub bins: usize,
    /// Test level for inverted intervals
    #[arg(long, default_value_t = 0.05)]
    pub alpha: Real,
    /// Grid points per inversion pass
    #[arg(long, default_value_t = 201)]
    pub grid_points: usize,
    /// Master seed for replicate draws (default: the assignment's seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rescale the during-period effect by this take-up difference (Wald)
    #[arg(long)]
    pub takeup: Option<Real>,
    /// Output report JSON
    #[arg(long)]
    pub out: PathBuf,
}

pub fn estimate(cmd: EstimateCmd) -> Result<()> {
    match cmd {
        EstimateCmd::Direct(args) => direct(args),
    }
}

fn check_alignment(panel: &OutcomePanel, a: &Assignment) -> Result<()> {
    if a.ids != panel.ids {
        return Err(Error::invalid(
            "assignment covers a different user set than the panel (rebuild the panel with --roster)",
        ));
    }
    Ok(())
}

fn subgroup_reports(
    spec: &str,
    panel: &OutcomePanel,
    delta: &[Real],
    period_tag: &str,
    a: &Assignment,
    table: &netx_core::design::PropensityTable,
) -> Result<Vec<EstimateReport>> {
    let (name, side) = match spec.split_once(':') {
        Some((n, s)) => (n, Some(s)),
        None => (spec, None),
    };
    let splitter: &[Real] = match name {
        "median_activity" => &panel.activity_pre,
        "median_hate_share" => &panel.hate_share_pre,
        _ => {
            return Err(Error::invalid(format!(
                "unknown subgroup '{name}' (expected median_activity or median_hate_share)"
            )))
        }
    };
    let fit = subgroup_ate(delta, splitter, &a.z, &a.cluster_of, table)?;
    let mut out = Vec::new();
    let mut push = |tag: &str, est| {
        out.push(EstimateReport::from_ate(
            &format!("direct:{period_tag}:{name}:{tag}"),
            est,
        ));
    };
    match side {
        Some("low") => push("low", &fit.low),
        Some("high") => push("high", &fit.high),
        None => {
            push("low", &fit.low);
            push("high", &fit.high);
        }
        Some(other) => {
            return Err(Error::invalid(format!(
                "unknown subgroup side '{other}' (expected low or high)"
            )))
        }
    }
    Ok(out)
}

fn direct(args: DirectArgs) -> Result<()> {
    let panel = read_panel_csv(&args.panel)?;
    let a = read_assignment_csv(&args.assignment)?;
    check_alignment(&panel, &a)?;
    let table = propensities(&a.params);
    let seed = args.seed.unwrap_or(a.seed);

    let mut estimates = Vec::new();
    let during = ate_difference(&panel.delta_during, &a.z, &a.cluster_of, &table)?;
    estimates.push(EstimateReport::from_ate("direct:during", &during));
    estimates.push(EstimateReport::from_ate(
        "direct:post",
        &ate_difference(&panel.delta_post, &a.z, &a.cluster_of, &table)?,
    ));

    if let Some(spec) = &args.subgroup {
        estimates.extend(subgroup_reports(
            spec,
            &panel,
            &panel.delta_during,
            "during",
            &a,
            &table,
        )?);
    }

    if let Some(takeup) = args.takeup {
        let tot = tot_wald(during.point, during.std_error, takeup)?;
        estimates.push(EstimateReport::from_tot(&tot, during.n));
    }

    if args.monthly_ri {
        let clusters = crate::util::clusters_of_assignment(&a)?;
        let cols: Vec<_> = panel
            .month_cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.period != Period::Pre)
            .map(|(k, &c)| {
                let y: Vec<Real> = (0..panel.n()).map(|i| panel.logs[i][k]).collect();
                (c, y)
            })
            .collect();
        let borrowed: Vec<_> = cols.iter().map(|(c, y)| (*c, y.as_slice())).collect();
        let opts = MonthlyRiOptions {
            replicates: args.reps,
            bins: args.bins,
            alpha: args.alpha,
            grid_points: args.grid_points,
            seed: derive(seed, "ri", 0),
        };
        for res in monthly_ri(&borrowed, &panel.y_pre, &a.z, &clusters, &a.params, &opts)? {
            estimates.push(EstimateReport::from_monthly_ri(&res, panel.n()));
        }
    }

    let mut prov = Provenance::new("estimate direct", Some(seed))
        .param("p_t", a.params.p_t)
        .param("p_hp", a.params.p_hp)
        .param("assignment_seed", a.seed)
        .param("monthly_ri", args.monthly_ri)
        .param("replicates", args.reps)
        .param("bins", args.bins)
        .param("alpha", args.alpha);
    if let Some(s) = &args.subgroup {
        prov = prov.param("subgroup", s.as_str());
    }
    if let Some(t) = args.takeup {
        prov = prov.param("takeup", t);
    }
    hash_input(&mut prov, &args.panel)?;
    hash_input(&mut prov, &args.assignment)?;

    let bundle = ReportBundle::new(prov, estimates);
    with_cleanup(|t| {
        t.add(&args.out);
        write_json(&args.out, &bundle)
    })?;
    eprintln!("{} estimates -> {}", bundle.estimates.len(), args.out.display());
    Ok(())
}
