//! Synthetic experiments with planted ground truth.
//!
//! Everything the estimation pipeline consumes can be generated here:
//! clustered interaction networks with heavy-tailed weights, outcome panels
//! whose treatment effects are known exactly, upstream repost scenarios
//! with a linear exposure response, and full post logs for end-to-end runs.
//! Planted parameters are echoed into a [`Truth`] manifest so downstream
//! checks read the ground truth from one place.
//!
//! Generation is parallel per user over labeled RNG substreams, so output
//! is byte-identical for a given seed regardless of worker count.

use crate::design::DesignParams;
use crate::error::{Error, Result};
use crate::exposure::{Condition, ExposureClassification};
use crate::netgraph::{ClusterAssignment, InteractionGraph};
use crate::outcomes::{OutcomePanel, Period, PeriodSpec, PostEvent, PostKind};
use crate::rng::substream;
use crate::upstream::{build_rosters, exposures_pp, pct_to_log, RepostRosters};
use crate::Real;
use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Pareto, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Network shape: cluster structure and edge laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub n: usize,
    pub n_clusters: usize,
    /// Directed edge draws per node toward same-cluster peers.
    pub within_edges_per_node: usize,
    /// Directed edge draws per node toward other clusters.
    pub cross_edges_per_node: usize,
    /// Pareto shape of edge weights (smaller = heavier tail).
    pub weight_tail_alpha: Real,
    /// Pareto scale (minimum) of edge weights.
    pub weight_scale: Real,
    /// Pareto shape of node activity, which drives attachment.
    pub activity_tail_alpha: Real,
    /// Keep the planted clustering; otherwise re-carve from the graph.
    pub planted_clusters: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            n: 200,
            n_clusters: 40,
            within_edges_per_node: 4,
            cross_edges_per_node: 1,
            weight_tail_alpha: 1.8,
            weight_scale: 1.0,
            activity_tail_alpha: 2.0,
            planted_clusters: true,
        }
    }
}

/// Outcome process: baseline law plus planted effects on the log scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeSpec {
    /// Log-normal baseline count: location of log counts.
    pub baseline_mu: Real,
    /// Log-normal baseline count: scale of log counts.
    pub baseline_sigma: Real,
    /// Common shift of the during-period log outcome.
    pub trend_during: Real,
    /// Common shift of the post-period log outcome.
    pub trend_post: Real,
    /// Direct effect of own assignment (log scale).
    pub tau_direct: Real,
    /// Extra effect for treated units in high-exposure neighborhoods.
    pub exposure_high_treated: Real,
    /// Spillover onto control units in high-exposure neighborhoods.
    pub exposure_high_control: Real,
    /// Fraction of the during-period effect carried into the post period.
    pub beta: Real,
    /// Gaussian noise scale (log scale by default).
    pub noise_sigma: Real,
    /// Stress mode: add the noise on the count scale instead, breaking the
    /// linear-in-logs assumption on purpose.
    pub count_scale_noise: bool,
}

impl Default for OutcomeSpec {
    fn default() -> Self {
        OutcomeSpec {
            baseline_mu: 1.6,
            baseline_sigma: 0.9,
            trend_during: 0.05,
            trend_post: 0.02,
            tau_direct: -0.05,
            exposure_high_treated: 0.0,
            exposure_high_control: 0.0,
            beta: 0.75,
            noise_sigma: 0.08,
            count_scale_noise: false,
        }
    }
}

/// Upstream repost process with a linear exposure response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpstreamSpec {
    pub n_upstream: usize,
    /// Distinct participant reposters per account, uniform in this range.
    pub roster_min: usize,
    pub roster_max: usize,
    /// Mean extra reposts per roster member beyond the first (Poisson).
    pub repeat_mean: Real,
    /// Mean reposts from accounts outside the participant universe.
    pub outside_mean: Real,
    /// Planted percent change per percentage point of treated share.
    pub tau_pct_per_pp: Real,
    /// Carry-over fraction of the upstream effect in the post period.
    pub beta: Real,
    /// Baseline (zero-exposure) outcome: location and scale.
    pub base_mu: Real,
    pub base_sigma: Real,
    /// Per-month probability a user swaps one favorite source (event mode).
    pub churn: Real,
}

impl Default for UpstreamSpec {
    fn default() -> Self {
        UpstreamSpec {
            n_upstream: 60,
            roster_min: 6,
            roster_max: 14,
            repeat_mean: 0.6,
            outside_mean: 5.0,
            tau_pct_per_pp: -3.0,
            beta: 0.6,
            base_mu: 0.0,
            base_sigma: 0.25,
            churn: 0.35,
        }
    }
}

/// Complete scenario: network, outcomes, upstream process, design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub network: NetworkSpec,
    pub outcomes: OutcomeSpec,
    pub upstream: UpstreamSpec,
    pub design: DesignParams,
    /// Neighborhood exposure threshold.
    pub q: Real,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            network: NetworkSpec::default(),
            outcomes: OutcomeSpec::default(),
            upstream: UpstreamSpec::default(),
            design: DesignParams { p_t: 0.5, p_hp: 0.18 },
            q: 0.75,
        }
    }
}

/// Schema identifier embedded in every truth manifest.
pub const TRUTH_SCHEMA: &str = "netx/truth/v1";

/// Ground-truth manifest: every planted parameter, nothing else.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Truth {
    pub schema: String,
    pub seed: u64,
    pub design: DesignParams,
    pub q: Real,
    pub n: usize,
    pub n_clusters: usize,
    pub tau_direct: Real,
    pub exposure_high_treated: Real,
    pub exposure_high_control: Real,
    pub beta: Real,
    pub tau_upstream_pct_per_pp: Real,
    pub tau_upstream_log_per_pp: Real,
    pub upstream_beta: Real,
    pub n_upstream: usize,
    pub churn: Real,
}

/// Collect the planted values of a scenario into the truth manifest.
pub fn truth_of(spec: &ScenarioSpec, seed: u64) -> Truth {
    Truth {
        schema: TRUTH_SCHEMA.to_string(),
        seed,
        design: spec.design,
        q: spec.q,
        n: spec.network.n,
        n_clusters: spec.network.n_clusters,
        tau_direct: spec.outcomes.tau_direct,
        exposure_high_treated: spec.outcomes.exposure_high_treated,
        exposure_high_control: spec.outcomes.exposure_high_control,
        beta: spec.outcomes.beta,
        tau_upstream_pct_per_pp: spec.upstream.tau_pct_per_pp,
        tau_upstream_log_per_pp: pct_to_log(spec.upstream.tau_pct_per_pp),
        upstream_beta: spec.upstream.beta,
        n_upstream: spec.upstream.n_upstream,
        churn: spec.upstream.churn,
    }
}

/// A study window used by generated data: Jan–Feb pre, Mar–Apr during,
/// May–Jun post of 2023.
pub fn default_periods() -> PeriodSpec {
    let d = |m: u32| Utc.with_ymd_and_hms(2023, m, 1, 0, 0, 0).unwrap();
    PeriodSpec::new((d(1), d(3)), (d(3), d(5)), (d(5), d(7))).expect("static windows")
}

fn user_id(i: usize) -> String {
    format!("u{i:06}")
}

// ------------------------------------------------------------------ network

/// Generate a clustered interaction graph with heavy-tailed weights.
///
/// Cluster sizes follow normalized Pareto shares (minimum one member). Each
/// node draws edges toward activity-weighted peers, mostly within its
/// cluster, with Pareto weights. Returns the graph together with either the
/// planted clustering or a fresh carving of the generated graph.
pub fn gen_network(
    spec: &NetworkSpec,
    seed: u64,
) -> Result<(InteractionGraph, ClusterAssignment)> {
    if spec.n < 2 {
        return Err(Error::invalid("network needs at least two nodes"));
    }
    if spec.n_clusters == 0 || spec.n_clusters > spec.n {
        return Err(Error::invalid("cluster count must lie in 1..=n"));
    }
    if !(spec.weight_tail_alpha > 0.0 && spec.activity_tail_alpha > 0.0) {
        return Err(Error::invalid("tail exponents must be positive"));
    }
    if !(spec.weight_scale > 0.0) {
        return Err(Error::invalid("weight scale must be positive"));
    }

    // cluster sizes: Pareto shares, floored at one member each
    let sizes = {
        let mut rng = substream(seed, "sim/cluster-sizes", 0);
        let law = Pareto::new(1.0, 1.2).expect("valid Pareto");
        let draws: Vec<Real> = (0..spec.n_clusters).map(|_| law.sample(&mut rng)).collect();
        let total: Real = draws.iter().sum();
        let spare = spec.n - spec.n_clusters;
        let mut sizes: Vec<usize> =
            draws.iter().map(|d| 1 + (d / total * spare as Real).floor() as usize).collect();
        let mut assigned: usize = sizes.iter().sum();
        // hand out the rounding remainder one by one
        let mut c = 0;
        while assigned < spec.n {
            sizes[c % spec.n_clusters] += 1;
            assigned += 1;
            c += 1;
        }
        while assigned > spec.n {
            if sizes[c % spec.n_clusters] > 1 {
                sizes[c % spec.n_clusters] -= 1;
                assigned -= 1;
            }
            c += 1;
        }
        sizes
    };
    let mut cluster_of = Vec::with_capacity(spec.n);
    for (c, &s) in sizes.iter().enumerate() {
        cluster_of.extend(std::iter::repeat(c as u32).take(s));
    }

    // node activity drives attachment probabilities
    let activity: Vec<Real> = {
        let mut rng = substream(seed, "sim/activity", 0);
        let law = Pareto::new(1.0, spec.activity_tail_alpha).expect("valid Pareto");
        (0..spec.n).map(|_| law.sample(&mut rng)).collect()
    };

    // per-cluster member lists with activity prefix sums
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); spec.n_clusters];
    for (i, &c) in cluster_of.iter().enumerate() {
        members[c as usize].push(i as u32);
    }
    let prefix = |list: &[u32]| -> Vec<Real> {
        let mut acc = 0.0;
        list.iter().map(|&j| {
            acc += activity[j as usize];
            acc
        })
        .collect()
    };
    let within_prefix: Vec<Vec<Real>> = members.iter().map(|m| prefix(m)).collect();
    let all_nodes: Vec<u32> = (0..spec.n as u32).collect();
    let global_prefix = prefix(&all_nodes);

    let pick = |prefix: &[Real], list: &[u32], rng: &mut rand_chacha::ChaCha12Rng| -> u32 {
        let total = *prefix.last().expect("non-empty sampling list");
        let u: Real = rng.gen_range(0.0..total);
        let k = prefix.partition_point(|&p| p <= u).min(list.len() - 1);
        list[k]
    };

    let weight_law = Pareto::new(spec.weight_scale, spec.weight_tail_alpha).expect("valid Pareto");
    let edges: Vec<(String, String, Real)> = (0..spec.n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = substream(seed, "sim/edges", i as u64);
            let c = cluster_of[i] as usize;
            let mut out = Vec::new();
            for _ in 0..spec.within_edges_per_node {
                if members[c].len() < 2 {
                    break;
                }
                for _ in 0..20 {
                    let j = pick(&within_prefix[c], &members[c], &mut rng);
                    if j as usize != i {
                        out.push((user_id(i), user_id(j as usize), weight_law.sample(&mut rng)));
                        break;
                    }
                }
            }
            for _ in 0..spec.cross_edges_per_node {
                for _ in 0..20 {
                    let j = pick(&global_prefix, &all_nodes, &mut rng);
                    if cluster_of[j as usize] != cluster_of[i] {
                        out.push((user_id(i), user_id(j as usize), weight_law.sample(&mut rng)));
                        break;
                    }
                }
            }
            out
        })
        .collect();
    if edges.is_empty() {
        return Err(Error::invalid("generated network has no edges; raise the edge counts"));
    }
    let graph = InteractionGraph::from_weighted_edges(edges)?;

    let clusters = if spec.planted_clusters {
        // isolated nodes never enter the graph, so restrict labels to it
        let rows: Vec<(String, u64, bool)> = graph
            .ids()
            .iter()
            .map(|id| {
                let i: usize = id[1..].parse().expect("generated id");
                (id.clone(), cluster_of[i] as u64, false)
            })
            .collect();
        ClusterAssignment::from_pairs(rows)?
    } else {
        crate::netgraph::three_net_cluster(&graph, seed)
    };
    Ok((graph, clusters))
}

/// Hill estimator of a Pareto tail index from the top `k` order statistics.
pub fn hill_tail_index(values: &[Real], k: usize) -> Option<Real> {
    if k == 0 || values.len() <= k {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted[k] <= 0.0 {
        return None;
    }
    let mean_log: Real =
        sorted[..k].iter().map(|&x| (x / sorted[k]).ln()).sum::<Real>() / k as Real;
    (mean_log > 0.0).then(|| 1.0 / mean_log)
}

// ----------------------------------------------------------------- outcomes

/// Generate an outcome panel with planted effects.
///
/// Baseline counts are log-normal; the during-period log outcome adds the
/// trend, `tau_direct` for treated users, and the exposure effects for the
/// high-exposure conditions; the post period carries `beta` of the realized
/// during-period deviation. Noise is Gaussian on the log scale (or on the
/// count scale in the deliberately misspecified stress mode). Deltas are
/// plain differences against the pre period.
pub fn gen_outcomes(
    ids: &[String],
    z: &[bool],
    exposure: Option<&ExposureClassification>,
    spec: &OutcomeSpec,
    periods: &PeriodSpec,
    seed: u64,
) -> Result<OutcomePanel> {
    let n = ids.len();
    if n == 0 {
        return Err(Error::invalid("no users to generate outcomes for"));
    }
    if z.len() != n {
        return Err(Error::invalid("assignment misaligned with user list"));
    }
    if let Some(e) = exposure {
        if e.condition.len() != n {
            return Err(Error::invalid("exposure classification misaligned with user list"));
        }
    }
    if !(spec.baseline_sigma >= 0.0 && spec.noise_sigma >= 0.0) {
        return Err(Error::invalid("scale parameters must be nonnegative"));
    }

    struct Row {
        y_pre: Real,
        y_during: Real,
        y_post: Real,
        activity: Real,
    }
    let rows: Vec<Row> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, "sim/outcome", i as u64);
            let count_pre =
                LogNormal::new(spec.baseline_mu, spec.baseline_sigma.max(1e-12))
                    .expect("valid log-normal")
                    .sample(&mut rng);
            let noise = Normal::new(0.0, spec.noise_sigma.max(1e-12)).expect("valid normal");
            let (eps_d, eps_p): (Real, Real) = if spec.noise_sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                // keep the stream advancing identically either way
                let _ = (noise.sample(&mut rng), noise.sample(&mut rng));
                (0.0, 0.0)
            };
            let effect = spec.tau_direct * (z[i] as u8 as Real)
                + match exposure.and_then(|e| e.condition[i]) {
                    Some(Condition::TreatedHigh) => spec.exposure_high_treated,
                    Some(Condition::ControlHigh) => spec.exposure_high_control,
                    _ => 0.0,
                };
            let y_pre = (1.0 + count_pre).ln();
            let mut y_during = y_pre + spec.trend_during + effect;
            if !spec.count_scale_noise {
                // carry-over applies to the realized during change, so the
                // during disturbance must land before the post level is built
                y_during += eps_d;
            }
            let mut y_post =
                y_pre + spec.trend_post + spec.beta * (y_during - y_pre - spec.trend_during);
            if spec.count_scale_noise {
                // misspecified mode: jitter counts, then re-log
                let c_d = (y_during.exp_m1() + eps_d * (1.0 + count_pre)).max(0.0);
                let c_p = (y_post.exp_m1() + eps_p * (1.0 + count_pre)).max(0.0);
                y_during = (1.0 + c_d).ln();
                y_post = (1.0 + c_p).ln();
            } else {
                y_post += eps_p;
            }
            Row { y_pre, y_during, y_post, activity: count_pre }
        })
        .collect();

    let mut panel = OutcomePanel::synthetic(
        ids.to_vec(),
        rows.iter().map(|r| r.y_pre).collect(),
        rows.iter().map(|r| r.y_during).collect(),
        rows.iter().map(|r| r.y_post).collect(),
        rows.iter().map(|r| r.activity).collect(),
        *periods,
    );
    panel.delta_during = panel.y_during.iter().zip(&panel.y_pre).map(|(d, p)| d - p).collect();
    panel.delta_post = panel.y_post.iter().zip(&panel.y_pre).map(|(d, p)| d - p).collect();
    Ok(panel)
}

// ----------------------------------------------------------------- upstream

/// A generated upstream experiment: the repost log behind it, the derived
/// rosters, and outcomes that respond linearly to the treated share.
#[derive(Clone, Debug)]
pub struct UpstreamScenario {
    /// Repost events the rosters were built from.
    pub posts: Vec<PostEvent>,
    pub rosters: RepostRosters,
    /// Realized dose (treated share, percentage points) per account.
    pub dose_pp: Vec<Real>,
    /// During-period outcome: baseline plus `tau_log_per_pp · dose`.
    pub delta_during: Vec<Real>,
    /// Post-period outcome: independent baseline plus `beta · tau · dose`.
    pub delta_post: Vec<Real>,
    /// The planted log-scale effect per percentage point.
    pub tau_log_per_pp: Real,
}

/// Generate rosters (via a fabricated repost log) and linear-response
/// outcomes for upstream accounts.
///
/// Outcomes satisfy the sharp null exactly: noise lives entirely in the
/// zero-exposure baselines, so `Y(z) = Y(0) + τ·dose(z)` holds by
/// construction in both periods.
pub fn gen_upstream_scenario(
    spec: &UpstreamSpec,
    participants: &ClusterAssignment,
    z: &[bool],
    window: (DateTime<Utc>, DateTime<Utc>),
    seed: u64,
) -> Result<UpstreamScenario> {
    let np = participants.n();
    if z.len() != np {
        return Err(Error::invalid("assignment misaligned with participants"));
    }
    if spec.n_upstream == 0 {
        return Err(Error::invalid("need at least one upstream account"));
    }
    if spec.roster_min == 0 || spec.roster_min > spec.roster_max || spec.roster_max > np {
        return Err(Error::invalid("roster size range must satisfy 1 <= min <= max <= n"));
    }
    if window.1 <= window.0 {
        return Err(Error::invalid("upstream window is empty"));
    }

    let posts: Vec<PostEvent> = (0..spec.n_upstream)
        .into_par_iter()
        .flat_map_iter(|u| {
            let mut rng = substream(seed, "sim/upstream-roster", u as u64);
            let sid = format!("s{u:05}");
            let size = rng.gen_range(spec.roster_min..=spec.roster_max);
            let mut idx: Vec<u32> = (0..np as u32).collect();
            let (chosen, _) = idx.partial_shuffle(&mut rng, size);
            let chosen: Vec<u32> = chosen.to_vec();
            let mut events = Vec::new();
            let mut k = 0u32;
            let push = |who: String, events: &mut Vec<PostEvent>, k: &mut u32| {
                events.push(PostEvent {
                    user_id: who,
                    post_id: format!("r{u:05}-{k:04}"),
                    ts: window.0 + Duration::seconds(*k as i64 % 3600),
                    kind: PostKind::Repost,
                    source_user_id: Some(sid.clone()),
                    source_post_id: Some(format!("orig{u:05}")),
                    hate_score: Some(1.0),
                    source_followers: Some(1000 + u as u64),
                    source_statuses: Some(500 + u as u64),
                    text_tokens: None,
                });
                *k += 1;
            };
            for &m in &chosen {
                let repeats = 1 + if spec.repeat_mean > 0.0 {
                    Poisson::new(spec.repeat_mean).expect("valid Poisson").sample(&mut rng) as u32
                } else {
                    0
                };
                for _ in 0..repeats {
                    push(participants.ids[m as usize].clone(), &mut events, &mut k);
                }
            }
            let outside = if spec.outside_mean > 0.0 {
                Poisson::new(spec.outside_mean).expect("valid Poisson").sample(&mut rng) as u32
            } else {
                0
            };
            for o in 0..outside {
                push(format!("x{u:05}-{o:03}"), &mut events, &mut k);
            }
            events
        })
        .collect();

    let rosters = build_rosters(&posts, &participants.ids, window, None)?;
    if rosters.n() != spec.n_upstream {
        return Err(Error::numerical("an upstream account generated no reposts"));
    }
    let dose_pp = exposures_pp(&rosters, z)?;
    let tau = pct_to_log(spec.tau_pct_per_pp);
    let n_up = rosters.n();
    let base = |label: &str, u: usize| -> Real {
        let mut rng = substream(seed, label, u as u64);
        Normal::new(spec.base_mu, spec.base_sigma.max(1e-12))
            .expect("valid normal")
            .sample(&mut rng)
    };
    let delta_during: Vec<Real> =
        (0..n_up).map(|u| base("sim/upstream-base", u) + tau * dose_pp[u]).collect();
    let delta_post: Vec<Real> =
        (0..n_up).map(|u| base("sim/upstream-post", u) + spec.beta * tau * dose_pp[u]).collect();
    Ok(UpstreamScenario { posts, rosters, dose_pp, delta_during, delta_post, tau_log_per_pp: tau })
}

// ----------------------------------------------------------------- post log

/// Generate a complete post log for end-to-end runs: per-month original
/// posts with scores, plus reposts of upstream accounts whose favorite
/// sources churn month over month.
pub fn gen_post_log(
    spec: &ScenarioSpec,
    periods: &PeriodSpec,
    seed: u64,
) -> Result<Vec<PostEvent>> {
    if spec.network.n == 0 {
        return Err(Error::invalid("post log needs at least one user"));
    }
    let months: Vec<crate::outcomes::Month> = [Period::Pre, Period::During, Period::Post]
        .into_iter()
        .flat_map(|p| periods.months(p))
        .collect();
    let n_upstream = spec.upstream.n_upstream.max(1);
    // fixed per-account audience metadata for composition analytics
    let meta: Vec<(u64, u64)> = {
        let mut rng = substream(seed, "sim/post-upstream", 0);
        let law = Pareto::new(100.0, 1.2).expect("valid Pareto");
        (0..n_upstream)
            .map(|_| (law.sample(&mut rng) as u64, 10 + rng.gen_range(0..2000)))
            .collect()
    };

    let mut posts: Vec<PostEvent> = (0..spec.network.n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = substream(seed, "sim/post-user", i as u64);
            let uid = user_id(i);
            let rate = LogNormal::new(spec.outcomes.baseline_mu, spec.outcomes.baseline_sigma)
                .expect("valid log-normal")
                .sample(&mut rng)
                .min(200.0);
            // three favorite sources, churning between months
            let mut favorites: Vec<usize> =
                (0..3).map(|_| rng.gen_range(0..n_upstream)).collect();
            let mut events = Vec::new();
            for (mi, month) in months.iter().enumerate() {
                let start = month.start();
                let n_orig = Poisson::new(rate.max(1e-9)).expect("valid Poisson")
                    .sample(&mut rng) as u32;
                for p in 0..n_orig.min(400) {
                    events.push(PostEvent {
                        user_id: uid.clone(),
                        post_id: format!("o{i:06}-{mi:02}-{p:04}"),
                        ts: start + Duration::minutes((p as i64 * 97) % (27 * 24 * 60)),
                        kind: PostKind::Original,
                        source_user_id: None,
                        source_post_id: None,
                        hate_score: Some(rng.gen_range(0.0..1.0)),
                        source_followers: None,
                        source_statuses: None,
                        text_tokens: None,
                    });
                }
                if mi > 0 {
                    for f in favorites.iter_mut() {
                        if rng.gen_bool(spec.upstream.churn.clamp(0.0, 1.0)) {
                            *f = rng.gen_range(0..n_upstream);
                        }
                    }
                }
                let n_rep = Poisson::new(2.0).expect("valid Poisson").sample(&mut rng) as u32;
                for p in 0..n_rep.min(50) {
                    let f = favorites[rng.gen_range(0..favorites.len())];
                    events.push(PostEvent {
                        user_id: uid.clone(),
                        post_id: format!("q{i:06}-{mi:02}-{p:04}"),
                        ts: start + Duration::minutes((p as i64 * 131) % (27 * 24 * 60)),
                        kind: PostKind::Repost,
                        source_user_id: Some(format!("s{f:05}")),
                        source_post_id: Some(format!("orig{f:05}-{mi:02}")),
                        hate_score: Some(rng.gen_range(0.0..1.0)),
                        source_followers: Some(meta[f].0),
                        source_statuses: Some(meta[f].1),
                        text_tokens: None,
                    });
                }
            }
            events
        })
        .collect();
    posts.sort_by(|a, b| (a.ts, &a.post_id).cmp(&(b.ts, &b.post_id)));
    Ok(posts)
}
