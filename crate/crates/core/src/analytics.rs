//! Behavioral analytics on the repost stream: source-set renewal, cascade
//! ordering, audience composition, and placebo-period construction.

use crate::error::{Error, Result};
use crate::outcomes::{HateMeasure, Month, PeriodSpec, PostEvent, PostKind};
use crate::{Real, Z975};
use chrono::{DateTime, Months as ChronoMonths, Utc};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// Mean source-set renewal between one month and the next.
#[derive(Clone, Debug, Serialize)]
pub struct RenewalPoint {
    pub from: Month,
    pub to: Month,
    /// Users active (≥ `min_reposts` qualifying reposts) in both months.
    pub n_users: usize,
    /// Mean of `1 − |S_t ∩ S_{t+1}| / |S_t|` over those users.
    pub mean: Real,
    pub std_error: Real,
    pub ci_low: Real,
    pub ci_high: Real,
}

/// How quickly users replace the accounts they repost.
///
/// For each user-month, the core source set `S` is the smallest set of
/// source accounts covering at least fraction `q` of the user's qualifying
/// reposts that month (greedy by repost count, ties by id). For users
/// active in two consecutive months, renewal is the share of the earlier
/// core set absent from the later one. A `measure` restricts to qualifying
/// content (score > 0); without one every repost counts.
pub fn renewal_rate(
    posts: &[PostEvent],
    q: Real,
    min_reposts: usize,
    measure: Option<&HateMeasure>,
) -> Result<Vec<RenewalPoint>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("coverage fraction must lie in (0, 1], got {q}")));
    }
    // (user, month) -> source -> repost count
    let mut tallies: BTreeMap<(&str, Month), BTreeMap<&str, u64>> = BTreeMap::new();
    let mut volume: BTreeMap<(&str, Month), usize> = BTreeMap::new();
    for p in posts {
        if p.kind != PostKind::Repost {
            continue;
        }
        let Some(src) = &p.source_user_id else { continue };
        if let Some(m) = measure {
            if m.score(p) <= 0.0 {
                continue;
            }
        }
        let key = (p.user_id.as_str(), Month::of(p.ts));
        *tallies.entry(key).or_default().entry(src.as_str()).or_insert(0) += 1;
        *volume.entry(key).or_insert(0) += 1;
    }

    // per-user-month greedy core sets
    let mut cores: BTreeMap<(&str, Month), BTreeSet<&str>> = BTreeMap::new();
    for (key, sources) in &tallies {
        if volume[key] < min_reposts {
            continue;
        }
        let mut ranked: Vec<(&str, u64)> = sources.iter().map(|(&s, &c)| (s, c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let total: u64 = ranked.iter().map(|&(_, c)| c).sum();
        let mut core = BTreeSet::new();
        let mut covered = 0u64;
        for (s, c) in ranked {
            core.insert(s);
            covered += c;
            if covered as Real / total as Real >= q {
                break;
            }
        }
        cores.insert(*key, core);
    }

    // group renewal values per consecutive month pair
    let mut pairs: BTreeMap<(Month, Month), Vec<Real>> = BTreeMap::new();
    for ((user, month), s_t) in &cores {
        let next = month.next();
        if let Some(s_next) = cores.get(&(*user, next)) {
            let kept = s_t.intersection(s_next).count();
            pairs
                .entry((*month, next))
                .or_default()
                .push(1.0 - kept as Real / s_t.len() as Real);
        }
    }

    Ok(pairs
        .into_iter()
        .map(|((from, to), vals)| {
            let n = vals.len();
            let mean = vals.iter().sum::<Real>() / n as Real;
            let var = if n > 1 {
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / (n as Real - 1.0)
            } else {
                0.0
            };
            let std_error = (var / n as Real).sqrt();
            RenewalPoint {
                from,
                to,
                n_users: n,
                mean,
                std_error,
                ci_low: mean - Z975 * std_error,
                ci_high: mean + Z975 * std_error,
            }
        })
        .collect())
}

/// Average cascade position of one user's reposts.
#[derive(Clone, Debug, Serialize)]
pub struct OrderingStat {
    pub user_id: String,
    /// Reposts in cascades with at least two reposts.
    pub n_reposts: usize,
    /// Mean normalized position in `[0, 1]` (0 = always first to repost).
    pub mean_position: Real,
}

/// Where in a repost cascade each user tends to act.
///
/// Reposts sharing a `source_post_id` form a cascade, strictly ordered by
/// `(timestamp, post id)`. A repost's normalized position is
/// `rank / (cascade size − 1)`; single-repost cascades carry no ordering
/// information and are skipped.
pub fn ordering_statistic(posts: &[PostEvent]) -> Vec<OrderingStat> {
    let mut cascades: BTreeMap<&str, Vec<(DateTime<Utc>, &str, &str)>> = BTreeMap::new();
    for p in posts {
        if p.kind != PostKind::Repost {
            continue;
        }
        let Some(orig) = &p.source_post_id else { continue };
        cascades.entry(orig.as_str()).or_default().push((p.ts, p.post_id.as_str(), p.user_id.as_str()));
    }
    let mut acc: BTreeMap<&str, (usize, Real)> = BTreeMap::new();
    for events in cascades.values_mut() {
        if events.len() < 2 {
            continue;
        }
        events.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)));
        let denom = (events.len() - 1) as Real;
        for (rank, &(_, _, user)) in events.iter().enumerate() {
            let e = acc.entry(user).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += rank as Real / denom;
        }
    }
    acc.into_iter()
        .map(|(user, (n, sum))| OrderingStat {
            user_id: user.to_string(),
            n_reposts: n,
            mean_position: sum / n as Real,
        })
        .collect()
}

/// Audience-size profile of the accounts a user reposts.
#[derive(Clone, Debug, Serialize)]
pub struct CompositionOutcome {
    pub ids: Vec<String>,
    /// Mean `ln(source followers / source statuses)` over the user's
    /// reposts in the window; `NaN` with no usable events.
    pub mean_log_ratio: Vec<Real>,
    pub n_events: Vec<usize>,
    /// Repost events skipped for missing or zero follower/status counts.
    pub excluded_events: usize,
}

/// Follower-per-post profile of reposted sources, per user.
///
/// The ratio discounts high-volume accounts: reach per unit of output.
/// Events without both counts, or with a zero in either, are excluded and
/// tallied.
pub fn composition_outcomes(
    posts: &[PostEvent],
    roster: &[String],
    window: (DateTime<Utc>, DateTime<Utc>),
) -> Result<CompositionOutcome> {
    let mut ids = roster.to_vec();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::invalid("composition needs a user roster"));
    }
    let idx = |id: &str| ids.binary_search_by(|x| x.as_str().cmp(id)).ok();
    let mut sums = vec![0.0; ids.len()];
    let mut counts = vec![0usize; ids.len()];
    let mut excluded = 0usize;
    for p in posts {
        if p.kind != PostKind::Repost || p.ts < window.0 || p.ts >= window.1 {
            continue;
        }
        let Some(i) = idx(&p.user_id) else { continue };
        match (p.source_followers, p.source_statuses) {
            (Some(f), Some(s)) if f > 0 && s > 0 => {
                sums[i] += (f as Real / s as Real).ln();
                counts[i] += 1;
            }
            _ => excluded += 1,
        }
    }
    let mean_log_ratio = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as Real } else { Real::NAN })
        .collect();
    Ok(CompositionOutcome { ids, mean_log_ratio, n_events: counts, excluded_events: excluded })
}

/// Shift all three analysis periods earlier by whole calendar months for a
/// placebo run. The shifted windows must end before the real intervention
/// starts, otherwise the "placebo" would overlap real treatment.
pub fn placebo_periods(real: &PeriodSpec, shift_months: u32) -> Result<PeriodSpec> {
    if shift_months == 0 {
        return Err(Error::invalid("placebo shift must be at least one month"));
    }
    let back = |t: DateTime<Utc>| -> Result<DateTime<Utc>> {
        t.checked_sub_months(ChronoMonths::new(shift_months))
            .ok_or_else(|| Error::invalid("placebo shift underflows the calendar"))
    };
    let shifted = PeriodSpec::new(
        (back(real.pre.0)?, back(real.pre.1)?),
        (back(real.during.0)?, back(real.during.1)?),
        (back(real.post.0)?, back(real.post.1)?),
    )?;
    if shifted.post.1 > real.during.0 {
        return Err(Error::invalid(format!(
            "placebo windows reach {} but real treatment starts {}; shift further back",
            shifted.post.1, real.during.0
        )));
    }
    Ok(shifted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ts(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    fn repost(user: &str, src: &str, orig: &str, when: &str) -> PostEvent {
        PostEvent {
            user_id: user.into(),
            post_id: format!("rp-{user}-{when}"),
            ts: ts(when),
            kind: PostKind::Repost,
            source_user_id: Some(src.into()),
            source_post_id: Some(orig.into()),
            hate_score: Some(0.9),
            source_followers: None,
            source_statuses: None,
            text_tokens: None,
        }
    }

    #[test]
    fn renewal_hand_example() {
        // January core {a} (a covers 3/4 ≥ 0.75); February needs {a, c}
        let posts = vec![
            repost("u", "a", "o1", "2023-01-02T00:00:00Z"),
            repost("u", "a", "o2", "2023-01-03T00:00:00Z"),
            repost("u", "a", "o3", "2023-01-04T00:00:00Z"),
            repost("u", "b", "o4", "2023-01-05T00:00:00Z"),
            repost("u", "a", "o5", "2023-02-02T00:00:00Z"),
            repost("u", "a", "o6", "2023-02-03T00:00:00Z"),
            repost("u", "c", "o7", "2023-02-04T00:00:00Z"),
            repost("u", "c", "o8", "2023-02-05T00:00:00Z"),
            // v drops its single source entirely
            repost("v", "x", "o9", "2023-01-02T00:00:00Z"),
            repost("v", "y", "oA", "2023-02-02T00:00:00Z"),
        ];
        let points = renewal_rate(&posts, 0.75, 1, None).unwrap();
        assert_eq!(points.len(), 1);
        let p = &points[0];
        assert_eq!((p.from, p.to), (Month { year: 2023, month: 1 }, Month { year: 2023, month: 2 }));
        assert_eq!(p.n_users, 2);
        // u keeps its core {a} (renewal 0); v renews fully (renewal 1)
        assert!((p.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn greedy_core_breaks_ties_by_id_and_q_one_takes_all() {
        // two sources with equal counts: greedy picks "a" first
        let posts = vec![
            repost("u", "b", "o1", "2023-01-02T00:00:00Z"),
            repost("u", "a", "o2", "2023-01-03T00:00:00Z"),
            repost("u", "a", "o3", "2023-02-02T00:00:00Z"),
            repost("u", "b", "o4", "2023-02-03T00:00:00Z"),
        ];
        // q = 0.5: January core is {a} alone (tie broken toward a);
        // February core is also {a}; renewal 0
        let half = renewal_rate(&posts, 0.5, 1, None).unwrap();
        assert!((half[0].mean - 0.0).abs() < 1e-12);
        // q = 1: both sources in both cores; renewal still 0
        let full = renewal_rate(&posts, 1.0, 1, None).unwrap();
        assert!((full[0].mean - 0.0).abs() < 1e-12);
        assert!(renewal_rate(&posts, 0.0, 1, None).is_err());
        assert!(renewal_rate(&posts, 1.2, 1, None).is_err());
    }

    #[test]
    fn ordering_positions_on_a_hand_cascade() {
        let posts = vec![
            repost("w1", "s", "orig", "2023-01-02T00:00:00Z"),
            repost("w2", "s", "orig", "2023-01-03T00:00:00Z"),
            repost("w3", "s", "orig", "2023-01-04T00:00:00Z"),
            repost("w4", "s", "orig", "2023-01-05T00:00:00Z"),
            // singleton cascade: ignored
            repost("w1", "s", "lone", "2023-01-06T00:00:00Z"),
        ];
        let stats = ordering_statistic(&posts);
        let pos = |u: &str| stats.iter().find(|s| s.user_id == u).unwrap().mean_position;
        assert!((pos("w1") - 0.0).abs() < 1e-15);
        assert!((pos("w2") - 1.0 / 3.0).abs() < 1e-15);
        assert!((pos("w4") - 1.0).abs() < 1e-15);
        assert_eq!(stats.iter().find(|s| s.user_id == "w1").unwrap().n_reposts, 1);
    }

    /// Pairwise-counting oracle: position = (#strictly earlier) / (size − 1)
    /// under the same (ts, post id) order.
    #[test]
    fn ordering_matches_quadratic_oracle() {
        let mut rng = crate::rng::substream(14, "analytics-test", 0);
        let mut posts = Vec::new();
        for k in 0..120 {
            let user = format!("u{:02}", rng.gen_range(0..15));
            let orig = format!("o{:02}", rng.gen_range(0..12));
            let day = rng.gen_range(1..28);
            // coarse timestamps force (ts, post_id) tie-breaks
            let mut p = repost(&user, "s", &orig, &format!("2023-01-{day:02}T00:00:00Z"));
            p.post_id = format!("p{k:03}");
            posts.push(p);
        }
        let fast = ordering_statistic(&posts);

        let mut expect: BTreeMap<String, (usize, Real)> = BTreeMap::new();
        let reposts: Vec<&PostEvent> = posts.iter().collect();
        for p in &reposts {
            let same: Vec<&&PostEvent> = reposts
                .iter()
                .filter(|q| q.source_post_id == p.source_post_id)
                .collect();
            if same.len() < 2 {
                continue;
            }
            let earlier = same
                .iter()
                .filter(|q| (q.ts, q.post_id.as_str()) < (p.ts, p.post_id.as_str()))
                .count();
            let e = expect.entry(p.user_id.clone()).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += earlier as Real / (same.len() - 1) as Real;
        }
        assert_eq!(fast.len(), expect.len());
        for s in &fast {
            let (n, sum) = expect[&s.user_id];
            assert_eq!(s.n_reposts, n);
            assert!((s.mean_position - sum / n as Real).abs() < 1e-12, "{}", s.user_id);
        }
    }

    #[test]
    fn composition_means_and_exclusions() {
        let w = (ts("2023-01-01T00:00:00Z"), ts("2023-02-01T00:00:00Z"));
        let mut p1 = repost("u", "s1", "o1", "2023-01-02T00:00:00Z");
        p1.source_followers = Some(1000);
        p1.source_statuses = Some(100);
        let mut p2 = repost("u", "s2", "o2", "2023-01-03T00:00:00Z");
        p2.source_followers = Some(50);
        p2.source_statuses = Some(500);
        let mut p3 = repost("u", "s3", "o3", "2023-01-04T00:00:00Z");
        p3.source_followers = Some(0); // excluded
        p3.source_statuses = Some(10);
        let p4 = repost("u", "s4", "o4", "2023-01-05T00:00:00Z"); // missing: excluded
        let roster = vec!["u".to_string(), "empty".to_string()];
        let c = composition_outcomes(&[p1, p2, p3, p4], &roster, w).unwrap();
        let want = ((10.0f64).ln() + (0.1f64).ln()) / 2.0;
        let iu = c.ids.iter().position(|s| s == "u").unwrap();
        assert!((c.mean_log_ratio[iu] - want).abs() < 1e-12);
        assert_eq!(c.n_events[iu], 2);
        assert_eq!(c.excluded_events, 2);
        let ie = c.ids.iter().position(|s| s == "empty").unwrap();
        assert!(c.mean_log_ratio[ie].is_nan());
    }

    #[test]
    fn placebo_shift_validates_overlap() {
        let real = PeriodSpec::new(
            (ts("2023-01-01T00:00:00Z"), ts("2023-04-01T00:00:00Z")),
            (ts("2023-04-01T00:00:00Z"), ts("2023-08-01T00:00:00Z")),
            (ts("2023-08-01T00:00:00Z"), ts("2023-11-01T00:00:00Z")),
        )
        .unwrap();
        // 10 months back: placebo post ends 2023-01-01 ≤ real during start
        let p = placebo_periods(&real, 10).unwrap();
        assert_eq!(p.pre.0, ts("2022-03-01T00:00:00Z"));
        assert_eq!(p.post.1, ts("2023-01-01T00:00:00Z"));
        // 6 months back: placebo post ends 2023-05-01, inside real treatment
        assert!(placebo_periods(&real, 6).is_err());
        assert!(placebo_periods(&real, 0).is_err());
    }
}
