//! Upstream-creator analysis: how removing part of an account's reposting
//! audience changes that account's own output.
//!
//! For each non-participant source account u, the pre-period repost log
//! yields an audience roster and two shares: `F_u`, the fraction of u's
//! reposts that came from experiment participants, and `T_u`, the fraction
//! that came from *treated* participants. By construction
//! `0 ≤ T_u ≤ F_u ≤ 1`, and under a replicate assignment only the treated
//! indicator changes, so `T` can be recomputed for thousands of replicates
//! from the stored rosters alone.
//!
//! Inference is randomization-based throughout: the effect of losing one
//! percentage point of audience is the bin-adjusted slope of the account's
//! difference-adjusted outcome on `T` (in percentage points), compared
//! against the same slope under replicate assignments. Sharp nulls are
//! linear in the null parameter, so a full null grid costs one pass.

use crate::design::{replicate_z, DesignParams};
use crate::error::{Error, Result};
use crate::netgraph::ClusterAssignment;
use crate::outcomes::{HateMeasure, PostEvent, PostKind};
use crate::regress::{fwl_slope, ri_linear_from_doses, Bins, GridCi, RiLinear};
use crate::Real;
use chrono::{DateTime, Utc};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// Audience rosters and exposure shares for candidate upstream accounts.
#[derive(Clone, Debug)]
pub struct RepostRosters {
    /// Candidate source accounts, sorted lexicographically.
    pub upstream_ids: Vec<String>,
    /// Participant universe the roster indices point into (sorted).
    pub participant_ids: Vec<String>,
    /// Per account: (participant index, repost weight) pairs, index-sorted.
    pub roster: Vec<Vec<(u32, Real)>>,
    /// All qualifying reposts of the account in the window (denominator).
    pub total_reposts: Vec<Real>,
    /// Reposts attributable to participants.
    pub participant_reposts: Vec<Real>,
    /// Largest lifetime status count seen on the account's repost events.
    pub source_activity: Vec<u64>,
}

impl RepostRosters {
    pub fn n(&self) -> usize {
        self.upstream_ids.len()
    }

    /// `F_u`: participant share of the account's reposts.
    pub fn f(&self, u: usize) -> Real {
        self.participant_reposts[u] / self.total_reposts[u]
    }

    /// `T_u` under an assignment of the participants: treated share of the
    /// account's reposts.
    pub fn t(&self, u: usize, z: &[bool]) -> Real {
        let treated: Real = self.roster[u]
            .iter()
            .filter(|&&(i, _)| z[i as usize])
            .map(|&(_, w)| w)
            .sum();
        treated / self.total_reposts[u]
    }
}

/// Build audience rosters from the repost log.
///
/// Counts reposts whose source is not itself a participant, inside
/// `window`; with a `measure`, only reposts of qualifying content
/// (measure score > 0) count, in numerator and denominator alike.
pub fn build_rosters(
    posts: &[PostEvent],
    participant_ids: &[String],
    window: (DateTime<Utc>, DateTime<Utc>),
    measure: Option<&HateMeasure>,
) -> Result<RepostRosters> {
    let mut participants = participant_ids.to_vec();
    participants.sort();
    participants.dedup();
    if participants.is_empty() {
        return Err(Error::invalid("upstream rosters need a participant universe"));
    }
    let pidx = |id: &str| participants.binary_search_by(|x| x.as_str().cmp(id)).ok();

    struct Acc {
        roster: BTreeMap<u32, Real>,
        total: Real,
        participant: Real,
        activity: u64,
    }
    let mut accounts: BTreeMap<String, Acc> = BTreeMap::new();
    for p in posts {
        if p.kind != PostKind::Repost || p.ts < window.0 || p.ts >= window.1 {
            continue;
        }
        let Some(src) = &p.source_user_id else { continue };
        if pidx(src).is_some() {
            continue; // participants are subjects, not upstream accounts
        }
        if let Some(m) = measure {
            if m.score(p) <= 0.0 {
                continue;
            }
        }
        let acc = accounts.entry(src.clone()).or_insert(Acc {
            roster: BTreeMap::new(),
            total: 0.0,
            participant: 0.0,
            activity: 0,
        });
        acc.total += 1.0;
        acc.activity = acc.activity.max(p.source_statuses.unwrap_or(0));
        if let Some(i) = pidx(&p.user_id) {
            acc.participant += 1.0;
            *acc.roster.entry(i as u32).or_insert(0.0) += 1.0;
        }
    }

    let mut upstream_ids = Vec::with_capacity(accounts.len());
    let mut roster = Vec::with_capacity(accounts.len());
    let mut total_reposts = Vec::with_capacity(accounts.len());
    let mut participant_reposts = Vec::with_capacity(accounts.len());
    let mut source_activity = Vec::with_capacity(accounts.len());
    for (id, acc) in accounts {
        upstream_ids.push(id);
        roster.push(acc.roster.into_iter().collect());
        total_reposts.push(acc.total);
        participant_reposts.push(acc.participant);
        source_activity.push(acc.activity);
    }
    Ok(RepostRosters {
        upstream_ids,
        participant_ids: participants,
        roster,
        total_reposts,
        participant_reposts,
        source_activity,
    })
}

/// Outcome of upstream-account selection.
#[derive(Clone, Debug, Serialize)]
pub struct SelectionSummary {
    pub candidates: usize,
    pub kept: usize,
    pub dropped_no_participant_reposts: usize,
    pub dropped_high_volume: usize,
    /// True when the account limit truncated an otherwise eligible list.
    pub truncated: bool,
}

/// Select analysis accounts: at least one participant repost, lifetime
/// volume below `max_activity`, ranked by participant share `F` (then
/// total reposts, then id) and truncated to `limit`.
pub fn select_upstream(
    rosters: &RepostRosters,
    max_activity: u64,
    limit: usize,
) -> (RepostRosters, SelectionSummary) {
    let mut order: Vec<usize> = Vec::new();
    let mut dropped_no_participant = 0usize;
    let mut dropped_high_volume = 0usize;
    for u in 0..rosters.n() {
        if rosters.participant_reposts[u] <= 0.0 {
            dropped_no_participant += 1;
        } else if rosters.source_activity[u] >= max_activity {
            dropped_high_volume += 1;
        } else {
            order.push(u);
        }
    }
    order.sort_by(|&a, &b| {
        rosters
            .f(b)
            .total_cmp(&rosters.f(a))
            .then(rosters.total_reposts[b].total_cmp(&rosters.total_reposts[a]))
            .then(rosters.upstream_ids[a].cmp(&rosters.upstream_ids[b]))
    });
    let eligible = order.len();
    let truncated = eligible > limit;
    order.truncate(limit);
    // back to id order for stable downstream alignment
    order.sort_by(|&a, &b| rosters.upstream_ids[a].cmp(&rosters.upstream_ids[b]));

    let pick = |v: &[Real]| order.iter().map(|&u| v[u]).collect::<Vec<_>>();
    let kept = RepostRosters {
        upstream_ids: order.iter().map(|&u| rosters.upstream_ids[u].clone()).collect(),
        participant_ids: rosters.participant_ids.clone(),
        roster: order.iter().map(|&u| rosters.roster[u].clone()).collect(),
        total_reposts: pick(&rosters.total_reposts),
        participant_reposts: pick(&rosters.participant_reposts),
        source_activity: order.iter().map(|&u| rosters.source_activity[u]).collect(),
    };
    let summary = SelectionSummary {
        candidates: rosters.n(),
        kept: kept.n(),
        dropped_no_participant_reposts: dropped_no_participant,
        dropped_high_volume,
        truncated,
    };
    (kept, summary)
}

/// Observed exposures of the selected accounts under one assignment, in
/// percentage points (the regression scale: effects read per pp of
/// audience treated).
pub fn exposures_pp(rosters: &RepostRosters, z: &[bool]) -> Result<Vec<Real>> {
    if z.len() != rosters.participant_ids.len() {
        return Err(Error::invalid("assignment misaligned with participant universe"));
    }
    Ok((0..rosters.n()).map(|u| 100.0 * rosters.t(u, z)).collect())
}

/// Bin-adjusted slope of the account outcome on treated-audience share.
///
/// `activity` supplies the equal-count adjustment bins (the account's own
/// baseline volume); slope units are log-outcome per percentage point.
pub fn upstream_statistic(
    delta: &[Real],
    t_pp: &[Real],
    activity: &[Real],
    bins_k: usize,
) -> Result<(Real, Bins)> {
    if delta.len() != t_pp.len() || delta.len() != activity.len() {
        return Err(Error::invalid("upstream regression inputs misaligned"));
    }
    let bins = Bins::equal_count(activity, bins_k)?;
    let theta = fwl_slope(delta, t_pp, &bins)
        .ok_or_else(|| Error::numerical("treated-audience share has no residual variation"))?;
    Ok((theta, bins))
}

/// Replicate summary for the upstream statistic under constant
/// per-percentage-point sharp nulls.
pub fn upstream_ri_linear(
    delta: &[Real],
    rosters: &RepostRosters,
    bins: &Bins,
    z: &[bool],
    clusters: &ClusterAssignment,
    params: &DesignParams,
    seed: u64,
    replicates: usize,
) -> Result<(RiLinear, usize)> {
    if clusters.ids != *rosters.participant_ids {
        return Err(Error::invalid("clustering covers a different participant universe"));
    }
    let t_obs = exposures_pp(rosters, z)?;
    let doses = (0..replicates).map(|b| {
        let zb = replicate_z(clusters, params, seed, b as u64);
        (0..rosters.n()).map(|u| 100.0 * rosters.t(u, &zb)).collect()
    });
    ri_linear_from_doses(delta, &t_obs, bins, doses)
}

/// Inverted confidence interval on the percent-change-per-pp scale.
#[derive(Clone, Debug, Serialize)]
pub struct UpstreamCi {
    /// Grid in percent per percentage point, as requested.
    pub grid_pct: Vec<Real>,
    /// Accepted hull in percent units.
    pub pct_low: Real,
    pub pct_high: Real,
    /// Same hull on the log scale the statistic lives on.
    pub log_low: Real,
    pub log_high: Real,
    pub empty: bool,
    pub touches_edge: bool,
    pub contiguous: bool,
}

/// Map a percent-change-per-pp grid value to the log-scale null parameter.
pub fn pct_to_log(pct: Real) -> Real {
    (1.0 + pct / 100.0).ln()
}

/// Invert the centered test over a percent grid.
///
/// Each grid value `g` (percent change per pp) maps to the log-scale sharp
/// null `ln(1 + g/100)`; acceptance is evaluated there and reported on both
/// scales.
pub fn ri_confidence_interval(ri: &RiLinear, grid_pct: &[Real], alpha: Real) -> Result<UpstreamCi> {
    if grid_pct.len() < 2 {
        return Err(Error::invalid("confidence grid needs at least two points"));
    }
    if grid_pct.iter().any(|&g| g <= -100.0) {
        return Err(Error::invalid("percent grid must stay above -100"));
    }
    let grid_log: Vec<Real> = grid_pct.iter().map(|&g| pct_to_log(g)).collect();
    let ci: GridCi = ri.invert(&grid_log, alpha);
    let (pct_low, pct_high) = if ci.empty {
        (Real::NAN, Real::NAN)
    } else {
        // recover the percent values whose logs bound the hull
        let lo = grid_log.iter().position(|&v| v == ci.low).expect("hull point on grid");
        let hi = grid_log.iter().rposition(|&v| v == ci.high).expect("hull point on grid");
        (grid_pct[lo], grid_pct[hi])
    };
    Ok(UpstreamCi {
        grid_pct: grid_pct.to_vec(),
        pct_low,
        pct_high,
        log_low: ci.low,
        log_high: ci.high,
        empty: ci.empty,
        touches_edge: ci.touches_edge,
        contiguous: ci.contiguous,
    })
}

/// Replicate summary for persistence of the upstream effect, rescaled so
/// the null parameter is the carry-over fraction β.
///
/// Under the joint sharp null (during effect `tau` per pp, post effect
/// `β·tau` per pp), post-period outcomes transport as
/// `Δ_post + β·tau·(T_b − T)`, so the post slope is linear in β; dividing
/// through by `tau` centers the statistic on β itself.
pub fn persistence_ri_linear(
    delta_post: &[Real],
    rosters: &RepostRosters,
    bins: &Bins,
    z: &[bool],
    clusters: &ClusterAssignment,
    params: &DesignParams,
    tau: Real,
    seed: u64,
    replicates: usize,
) -> Result<(RiLinear, usize)> {
    if tau.abs() < 1e-9 {
        return Err(Error::invalid(
            "persistence is undefined at a zero during-period effect",
        ));
    }
    let (ri, degenerate) = upstream_ri_linear(
        delta_post, rosters, bins, z, clusters, params, seed, replicates,
    )?;
    let a = ri.a.iter().map(|&v| v / tau).collect();
    Ok((RiLinear::new(ri.theta_obs / tau, a, ri.c), degenerate))
}

/// Per-τ confidence interval for the carry-over fraction β.
#[derive(Clone, Debug, Serialize)]
pub struct PersistenceCi {
    /// During-period effect the null was conditioned on (log per pp).
    pub tau: Real,
    pub beta_low: Real,
    pub beta_high: Real,
    pub p_at_one: Real,
    pub p_at_zero: Real,
    pub empty: bool,
    pub touches_edge: bool,
    pub contiguous: bool,
}

/// Invert the persistence test over β ∈ [0, 1] in steps of `step`.
pub fn persistence_ci(ri_beta: &RiLinear, step: Real, alpha: Real) -> Result<PersistenceCi> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::invalid("β grid step must lie in (0, 0.5]"));
    }
    let n = (1.0 / step).round() as usize;
    let grid: Vec<Real> = (0..=n).map(|i| (i as Real * step).min(1.0)).collect();
    let ci = ri_beta.invert(&grid, alpha);
    Ok(PersistenceCi {
        tau: Real::NAN, // caller stamps the conditioning value
        beta_low: ci.low,
        beta_high: ci.high,
        p_at_one: ri_beta.p_centered(1.0),
        p_at_zero: ri_beta.p_centered(0.0),
        empty: ci.empty,
        touches_edge: ci.touches_edge,
        contiguous: ci.contiguous,
    })
}

/// Audience attrition for one upstream account.
#[derive(Clone, Debug, Serialize)]
pub struct LostReposterRow {
    pub upstream_id: String,
    /// Pre-period reposters by group: treated / control participants and
    /// everyone else.
    pub treated_pre: usize,
    pub control_pre: usize,
    pub outside_pre: usize,
    /// Of those, how many never reposted the account again in the window.
    pub treated_lost: usize,
    pub control_lost: usize,
    pub outside_lost: usize,
}

/// Reposters who disappear: users who reposted the account's qualifying
/// content pre-period but not at all in the comparison window, split by
/// participant treatment status.
pub fn lost_reposters(
    posts: &[PostEvent],
    upstream_ids: &[String],
    participant_ids: &[String],
    z: &[bool],
    pre: (DateTime<Utc>, DateTime<Utc>),
    later: (DateTime<Utc>, DateTime<Utc>),
    measure: Option<&HateMeasure>,
) -> Result<Vec<LostReposterRow>> {
    if participant_ids.len() != z.len() {
        return Err(Error::invalid("assignment misaligned with participant universe"));
    }
    let uidx: BTreeMap<&str, usize> =
        upstream_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let pidx = |id: &str| participant_ids.binary_search_by(|x| x.as_str().cmp(id)).ok();

    let mut pre_set: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); upstream_ids.len()];
    let mut later_set: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); upstream_ids.len()];
    for p in posts {
        if p.kind != PostKind::Repost {
            continue;
        }
        let Some(src) = &p.source_user_id else { continue };
        let Some(&u) = uidx.get(src.as_str()) else { continue };
        if let Some(m) = measure {
            if m.score(p) <= 0.0 {
                continue;
            }
        }
        if p.ts >= pre.0 && p.ts < pre.1 {
            pre_set[u].insert(&p.user_id);
        } else if p.ts >= later.0 && p.ts < later.1 {
            later_set[u].insert(&p.user_id);
        }
    }

    let mut out = Vec::with_capacity(upstream_ids.len());
    for (u, id) in upstream_ids.iter().enumerate() {
        let mut row = LostReposterRow {
            upstream_id: id.clone(),
            treated_pre: 0,
            control_pre: 0,
            outside_pre: 0,
            treated_lost: 0,
            control_lost: 0,
            outside_lost: 0,
        };
        for &who in &pre_set[u] {
            let lost = !later_set[u].contains(who);
            match pidx(who) {
                Some(i) if z[i] => {
                    row.treated_pre += 1;
                    row.treated_lost += lost as usize;
                }
                Some(_) => {
                    row.control_pre += 1;
                    row.control_lost += lost as usize;
                }
                None => {
                    row.outside_pre += 1;
                    row.outside_lost += lost as usize;
                }
            }
        }
        out.push(row);
    }
    Ok(out)
}
