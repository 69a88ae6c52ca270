//! `netx run`: the full pipeline — cluster, assign, panel, and every
//! estimate — driven by one config file, with a manifest hashing all
//! inputs and outputs. Command-line flags override config values.

use crate::util::{
    align_ids, clusters_of_assignment, hash_input, parse_alpha, parse_category, parse_ts,
    with_cleanup, OutputTracker,
};
use chrono::{DateTime, Utc};
use clap::Args;
use netx_core::design::{assign, propensities, DesignParams};
use netx_core::direct::{ate_difference, monthly_ri, subgroup_ate, tot_wald, MonthlyRiOptions};
use netx_core::error::{Error, Result};
use netx_core::exposure::{
    classify_exposure, hajek_estimate, mc_exposure_propensities, HajekOptions,
};
use netx_core::io::{
    parse_grid, read_edges_csv, read_posts_jsonl, read_roster, write_assignment_csv,
    write_clusters_csv, write_json, write_panel_csv,
};
use netx_core::netgraph::{three_net_cluster, ClusterAssignment, InteractionGraph};
use netx_core::outcomes::{build_panel, difference_adjust, HateMeasure, Period, PeriodSpec};
use netx_core::persistence::estimate_persistence;
use netx_core::regress::Bins;
use netx_core::report::{
    exposure_reports, EstimateReport, Provenance, ReportBundle, RunManifest,
};
use netx_core::rng::derive;
use netx_core::upstream::{
    build_rosters, pct_to_log, persistence_ci, persistence_ri_linear, ri_confidence_interval,
    select_upstream, upstream_ri_linear,
};
use netx_core::Real;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct RunArgs {
    /// Pipeline config (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's output directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Override the config's master seed
    #[arg(long)]
    pub master_seed: Option<u64>,
}

// ----------------------------------------------------------------- config

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    out_dir: Option<PathBuf>,
    master_seed: Option<u64>,
    inputs: InputsCfg,
    periods: PeriodsCfg,
    #[serde(default)]
    design: DesignCfg,
    /// Outcome measure; defaults to a 0.5 score threshold.
    measure: Option<HateMeasure>,
    #[serde(default)]
    panel: PanelCfg,
    #[serde(default)]
    cluster: ClusterCfg,
    #[serde(default)]
    estimate: EstimateCfg,
    /// Omit the section to skip the exposure analysis.
    exposure: Option<ExposureCfg>,
    /// Omit the section to skip the upstream analyses.
    upstream: Option<UpstreamCfg>,
    #[serde(default)]
    persistence: PersistenceCfg,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InputsCfg {
    edges: PathBuf,
    posts: PathBuf,
    /// Restrict the analysis universe; default is every graph node.
    roster: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PeriodsCfg {
    pre: [String; 2],
    during: [String; 2],
    post: [String; 2],
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DesignCfg {
    p_t: Real,
    p_hp: Real,
}

impl Default for DesignCfg {
    fn default() -> Self {
        DesignCfg { p_t: 0.5, p_hp: 0.18 }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PanelCfg {
    category: String,
    alpha_pooling: String,
}

impl Default for PanelCfg {
    fn default() -> Self {
        PanelCfg { category: "all".into(), alpha_pooling: "pooled".into() }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClusterCfg {
    k_out: usize,
    k_in: usize,
}

impl Default for ClusterCfg {
    fn default() -> Self {
        ClusterCfg { k_out: 10, k_in: 10 }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimateCfg {
    subgroup: Option<String>,
    monthly_ri: bool,
    ri_replicates: usize,
    ri_bins: usize,
    alpha: Real,
    grid_points: usize,
    takeup: Option<Real>,
}

impl Default for EstimateCfg {
    fn default() -> Self {
        EstimateCfg {
            subgroup: None,
            monthly_ri: false,
            ri_replicates: 10_000,
            ri_bins: 6,
            alpha: 0.05,
            grid_points: 201,
            takeup: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExposureCfg {
    q: Real,
    mc_replicates: u64,
    bins: usize,
    trim: Real,
}

impl Default for ExposureCfg {
    fn default() -> Self {
        ExposureCfg { q: 0.75, mc_replicates: 50_000, bins: 0, trim: 1e-4 }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct UpstreamCfg {
    limit: usize,
    max_posts: u64,
    replicates: usize,
    bins: usize,
    grid: String,
    tau_grid: String,
    beta_grid: String,
    alpha: Real,
    /// Separate content filter for the upstream outcome (defaults to the
    /// panel measure).
    measure: Option<HateMeasure>,
}

impl Default for UpstreamCfg {
    fn default() -> Self {
        UpstreamCfg {
            limit: 400,
            max_posts: 15_000,
            replicates: 10_000,
            bins: 4,
            grid: "-10:0.25:10".into(),
            tau_grid: "-5:1:-1".into(),
            beta_grid: "0:0.01:1".into(),
            alpha: 0.05,
            measure: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PersistenceCfg {
    bins: usize,
}

impl Default for PersistenceCfg {
    fn default() -> Self {
        PersistenceCfg { bins: 40 }
    }
}

fn window(name: &str, w: &[String; 2]) -> Result<(DateTime<Utc>, DateTime<Utc>)> {
    let out = (parse_ts(&w[0])?, parse_ts(&w[1])?);
    if out.1 <= out.0 {
        return Err(Error::invalid(format!("{name} window is empty or inverted")));
    }
    Ok(out)
}

// ------------------------------------------------------------------ stages

pub fn run(args: RunArgs) -> Result<()> {
    let cfg: RunConfig = crate::util::read_toml(&args.config)?;
    let out_dir = args
        .out_dir
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::invalid("no output directory (set out_dir or pass --out-dir)"))?;
    let seed = args
        .master_seed
        .or(cfg.master_seed)
        .ok_or_else(|| Error::invalid("no master seed (set master_seed or pass --master-seed)"))?;

    let periods = PeriodSpec::new(
        window("pre", &cfg.periods.pre)?,
        window("during", &cfg.periods.during)?,
        window("post", &cfg.periods.post)?,
    )?;
    let params = DesignParams::new(cfg.design.p_t, cfg.design.p_hp)?;
    let measure = cfg.measure.clone().unwrap_or(HateMeasure::Threshold { c: 0.5 });
    let category = parse_category(&cfg.panel.category)?;
    let pooling = parse_alpha(&cfg.panel.alpha_pooling)?;

    let posts = read_posts_jsonl(&cfg.inputs.posts)?;
    let graph = InteractionGraph::from_weighted_edges(read_edges_csv(&cfg.inputs.edges)?)?;
    let pruned = graph.prune(cfg.cluster.k_out, cfg.cluster.k_in);
    let roster = match &cfg.inputs.roster {
        Some(p) => Some(read_roster(p)?),
        None => None,
    };

    std::fs::create_dir_all(out_dir.join("reports"))
        .map_err(|e| Error::io(&out_dir.join("reports"), e))?;
    let out = |name: &str| out_dir.join(name);

    // provenance shared by the manifest: config + raw inputs
    let mut run_prov = Provenance::new("run", Some(seed))
        .param("p_t", params.p_t)
        .param("p_hp", params.p_hp);
    hash_input(&mut run_prov, &args.config)?;
    hash_input(&mut run_prov, &cfg.inputs.edges)?;
    hash_input(&mut run_prov, &cfg.inputs.posts)?;
    if let Some(p) = &cfg.inputs.roster {
        hash_input(&mut run_prov, p)?;
    }

    with_cleanup(|t: &mut OutputTracker| {
        // stage 1: cluster the graph
        let clusters = three_net_cluster(pruned.as_graph(), derive(seed, "cluster", 0));
        let clusters = match &roster {
            Some(r) => restrict_clusters(&clusters, r)?,
            None => clusters,
        };
        t.add(&out("clusters.csv"));
        write_clusters_csv(&out("clusters.csv"), &clusters)?;

        // stage 2: draw the assignment
        let a = assign(&clusters, &params, derive(seed, "assign", 0));
        t.add_with_meta(&out("assignment.csv"));
        write_assignment_csv(&out("assignment.csv"), &a)?;

        // stage 3: build the outcome panel over the same universe
        let mut panel = build_panel(&posts, &periods, &measure, category, Some(&clusters.ids))?;
        if let Some(pooling) = pooling {
            difference_adjust(&mut panel, pooling, Some(&a.z))?;
        }
        t.add_with_meta(&out("panel.csv"));
        write_panel_csv(&out("panel.csv"), &panel)?;

        // stage 4: estimates
        let report = |t: &mut OutputTracker, name: &str, bundle: &ReportBundle| -> Result<()> {
            let path = out(&format!("reports/{name}.json"));
            t.add(&path);
            write_json(&path, bundle)
        };

        let direct = direct_stage(&cfg, seed, &panel, &a, &run_prov)?;
        report(t, "direct", &direct)?;

        let persistence = persistence_stage(&cfg, &panel, &clusters, &run_prov)?;
        report(t, "persistence", &persistence)?;

        if let Some(exp) = &cfg.exposure {
            let bundle = exposure_stage(exp, seed, &panel, &a, &pruned, &run_prov)?;
            report(t, "exposure", &bundle)?;
        }
        if let Some(up) = &cfg.upstream {
            let bundle =
                upstream_stage(up, seed, &posts, &a, &periods, measure.clone(), &run_prov)?;
            report(t, "upstream", &bundle)?;
        }

        // manifest last: hashes of everything the run read and wrote
        let mut manifest = RunManifest::new(&run_prov);
        for f in t.files().to_vec() {
            manifest.record_output(&f)?;
        }
        t.add(&out("manifest.json"));
        write_json(&out("manifest.json"), &manifest)
    })?;

    eprintln!("run complete -> {}", out_dir.display());
    Ok(())
}

/// Keep only roster members, preserving cluster labels.
fn restrict_clusters(clusters: &ClusterAssignment, roster: &[String]) -> Result<ClusterAssignment> {
    let idx = align_ids(&clusters.ids, roster, "the clustered graph")?;
    ClusterAssignment::from_pairs(
        idx.iter()
            .map(|&i| (clusters.ids[i].clone(), clusters.cluster_of[i] as u64, false))
            .collect(),
    )
}

fn direct_stage(
    cfg: &RunConfig,
    seed: u64,
    panel: &netx_core::outcomes::OutcomePanel,
    a: &netx_core::design::Assignment,
    run_prov: &Provenance,
) -> Result<ReportBundle> {
    let est = &cfg.estimate;
    let table = propensities(&a.params);
    let mut estimates = Vec::new();
    let during = ate_difference(&panel.delta_during, &a.z, &a.cluster_of, &table)?;
    estimates.push(EstimateReport::from_ate("direct:during", &during));
    estimates.push(EstimateReport::from_ate(
        "direct:post",
        &ate_difference(&panel.delta_post, &a.z, &a.cluster_of, &table)?,
    ));

    if let Some(spec) = &est.subgroup {
        let (name, _) = spec.split_once(':').unwrap_or((spec.as_str(), ""));
        let splitter: &[Real] = match name {
            "median_activity" => &panel.activity_pre,
            "median_hate_share" => &panel.hate_share_pre,
            _ => return Err(Error::invalid(format!("unknown subgroup '{name}'"))),
        };
        let fit = subgroup_ate(&panel.delta_during, splitter, &a.z, &a.cluster_of, &table)?;
        estimates.push(EstimateReport::from_ate(&format!("direct:during:{name}:low"), &fit.low));
        estimates.push(EstimateReport::from_ate(&format!("direct:during:{name}:high"), &fit.high));
    }
    if let Some(takeup) = est.takeup {
        let tot = tot_wald(during.point, during.std_error, takeup)?;
        estimates.push(EstimateReport::from_tot(&tot, during.n));
    }
    if est.monthly_ri {
        let clusters = clusters_of_assignment(a)?;
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
            replicates: est.ri_replicates,
            bins: est.ri_bins,
            alpha: est.alpha,
            grid_points: est.grid_points,
            seed: derive(seed, "ri", 0),
        };
        for res in monthly_ri(&borrowed, &panel.y_pre, &a.z, &clusters, &a.params, &opts)? {
            estimates.push(EstimateReport::from_monthly_ri(&res, panel.n()));
        }
    }

    let prov = stage_prov(run_prov, "estimate direct", Some(seed))
        .param("monthly_ri", est.monthly_ri)
        .param("replicates", est.ri_replicates)
        .param("bins", est.ri_bins)
        .param("alpha", est.alpha);
    Ok(ReportBundle::new(prov, estimates))
}

fn persistence_stage(
    cfg: &RunConfig,
    panel: &netx_core::outcomes::OutcomePanel,
    clusters: &ClusterAssignment,
    run_prov: &Provenance,
) -> Result<ReportBundle> {
    let est = estimate_persistence(panel, &clusters.cluster_of, cfg.persistence.bins)?;
    let prov = stage_prov(run_prov, "persistence", None)
        .param("bins", cfg.persistence.bins)
        .param("n_clusters", est.n_clusters);
    Ok(ReportBundle::new(prov, vec![EstimateReport::from_persistence(&est)]))
}

fn exposure_stage(
    exp: &ExposureCfg,
    seed: u64,
    panel: &netx_core::outcomes::OutcomePanel,
    a: &netx_core::design::Assignment,
    pruned: &netx_core::netgraph::PrunedGraph,
    run_prov: &Provenance,
) -> Result<ReportBundle> {
    let g = pruned.as_graph();
    // the run universe may be a roster subset of the graph, so align both ways
    let in_universe = g.ids().iter().map(|id| a.ids.binary_search(id).ok()).collect::<Vec<_>>();
    let kept: Vec<u32> = (0..g.n() as u32).filter(|&i| in_universe[i as usize].is_some()).collect();
    if kept.len() != g.n() {
        // exposure needs z on every graph node; the roster case restricts the
        // graph by rebuilding it from surviving edges
        let edges: Vec<(String, String, Real)> = kept
            .iter()
            .flat_map(|&i| {
                g.out_neighbors(i)
                    .iter()
                    .filter(|(j, _)| in_universe[*j as usize].is_some())
                    .map(move |&(j, w)| (g.id(i).to_string(), g.id(j).to_string(), w))
                    .collect::<Vec<_>>()
            })
            .collect();
        let sub = InteractionGraph::from_weighted_edges(edges)?;
        return exposure_on(exp, seed, panel, a, &sub, None, run_prov);
    }
    exposure_on(exp, seed, panel, a, g, Some(pruned), run_prov)
}

fn exposure_on(
    exp: &ExposureCfg,
    seed: u64,
    panel: &netx_core::outcomes::OutcomePanel,
    a: &netx_core::design::Assignment,
    g: &InteractionGraph,
    pruned: Option<&netx_core::netgraph::PrunedGraph>,
    run_prov: &Provenance,
) -> Result<ReportBundle> {
    let units: Vec<String> = g.ids().to_vec();
    let in_assignment = align_ids(&a.ids, &units, "the assignment")?;
    let in_panel = align_ids(&panel.ids, &units, "the panel")?;
    let z: Vec<bool> = in_assignment.iter().map(|&i| a.z[i]).collect();
    let delta: Vec<Real> = in_panel.iter().map(|&i| panel.delta_during[i]).collect();
    let baseline: Vec<Real> = in_panel.iter().map(|&i| panel.y_pre[i]).collect();
    let cluster_of: Vec<u32> = in_assignment.iter().map(|&i| a.cluster_of[i]).collect();
    let clusters = ClusterAssignment::from_pairs(
        units.iter().zip(&cluster_of).map(|(id, &c)| (id.clone(), c as u64, false)).collect(),
    )?;

    let class = classify_exposure(g, &z, exp.q)?;
    let props = mc_exposure_propensities(
        g,
        &clusters,
        &a.params,
        exp.q,
        exp.mc_replicates,
        derive(seed, "mc", 0),
    )?;
    let est = hajek_estimate(
        &delta,
        Some(&baseline),
        &class,
        &props,
        &cluster_of,
        pruned,
        &HajekOptions { trim_threshold: exp.trim, bins: exp.bins },
    )?;
    let prov = stage_prov(run_prov, "exposure", Some(seed))
        .param("q", exp.q)
        .param("mc_replicates", exp.mc_replicates)
        .param("trim_threshold", exp.trim)
        .param("bins", exp.bins)
        .param("n_units", units.len());
    Ok(ReportBundle::new(prov, exposure_reports(&est)))
}

fn upstream_stage(
    up: &UpstreamCfg,
    seed: u64,
    posts: &[netx_core::outcomes::PostEvent],
    a: &netx_core::design::Assignment,
    periods: &PeriodSpec,
    panel_measure: HateMeasure,
    run_prov: &Provenance,
) -> Result<ReportBundle> {
    let measure = up.measure.clone().unwrap_or(panel_measure);
    let rosters_during = build_rosters(posts, &a.ids, periods.during, Some(&measure))?;
    let (rosters, summary) = select_upstream(&rosters_during, up.max_posts, up.limit);
    if rosters.n() == 0 {
        return Err(Error::invalid("no upstream accounts survive selection"));
    }
    let counts = |window: (DateTime<Utc>, DateTime<Utc>)| -> Result<Vec<Real>> {
        let all = build_rosters(posts, &a.ids, window, Some(&measure))?;
        Ok(rosters
            .upstream_ids
            .iter()
            .map(|id| {
                all.upstream_ids.binary_search(id).map(|u| all.total_reposts[u]).unwrap_or(0.0)
            })
            .collect())
    };
    let base = counts(periods.pre)?;
    let delta_of = |now: &[Real]| -> Vec<Real> {
        base.iter().zip(now).map(|(b, n)| (1.0 + n).ln() - (1.0 + b).ln()).collect()
    };
    let delta_during = delta_of(&counts(periods.during)?);
    let delta_post = delta_of(&counts(periods.post)?);

    let activity: Vec<Real> = rosters.source_activity.iter().map(|&v| v as Real).collect();
    let bins = Bins::equal_count(&activity, up.bins)?;
    let clusters = clusters_of_assignment(a)?;

    let mut estimates = Vec::new();
    let (ri, degenerate) = upstream_ri_linear(
        &delta_during,
        &rosters,
        &bins,
        &a.z,
        &clusters,
        &a.params,
        derive(seed, "ri", 1),
        up.replicates,
    )?;
    let ci = ri_confidence_interval(&ri, &parse_grid(&up.grid)?, up.alpha)?;
    estimates.push(EstimateReport::from_upstream_ci(
        ri.theta_obs,
        ri.p_point(0.0),
        &ci,
        rosters.n(),
        ri.n_replicates(),
        degenerate,
    ));

    let beta_grid = parse_grid(&up.beta_grid)?;
    if beta_grid.len() < 2 || beta_grid[0] != 0.0 || *beta_grid.last().unwrap() != 1.0 {
        return Err(Error::invalid("beta grid must run from 0 to 1"));
    }
    for (k, &tau_pct) in parse_grid(&up.tau_grid)?.iter().enumerate() {
        let (ri_beta, _) = persistence_ri_linear(
            &delta_post,
            &rosters,
            &bins,
            &a.z,
            &clusters,
            &a.params,
            pct_to_log(tau_pct),
            derive(seed, "ri", 2 + k as u64),
            up.replicates,
        )?;
        let ci = persistence_ci(&ri_beta, beta_grid[1] - beta_grid[0], up.alpha)?;
        let mut row = EstimateReport::from_persistence_ci(
            ri_beta.theta_obs,
            &ci,
            rosters.n(),
            ri_beta.n_replicates(),
        );
        row.estimand = format!("upstream_persistence_beta:tau_pct={tau_pct}");
        estimates.push(row);
    }

    let prov = stage_prov(run_prov, "upstream", Some(seed))
        .param("limit", up.limit)
        .param("max_posts", up.max_posts)
        .param("replicates", up.replicates)
        .param("bins", up.bins)
        .param("grid", up.grid.as_str())
        .param("tau_grid", up.tau_grid.as_str())
        .param("beta_grid", up.beta_grid.as_str())
        .param("selection", serde_json::to_value(&summary).expect("serializable summary"));
    Ok(ReportBundle::new(prov, estimates))
}

/// Stage provenance: the run's input hashes plus the stage's own name.
fn stage_prov(run_prov: &Provenance, command: &str, seed: Option<u64>) -> Provenance {
    let mut p = Provenance::new(command, seed);
    p.inputs = run_prov.inputs.clone();
    p
}
