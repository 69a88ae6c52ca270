//! Outcome panels from post logs.
//!
//! Posts are bucketed into UTC calendar months inside three analysis
//! periods (pre / during / post). A month that straddles a period boundary
//! contributes its intersection with each period separately, so period
//! columns never double-count. The per-month outcome is `ln(1 + count)`
//! under the configured hate measure, and a period's outcome is the
//! unweighted mean of its monthly logs — heavy-tailed daily volumes make
//! the log scale the natural effect scale, and monthly averaging keeps
//! partial months from dominating.

use crate::error::{Error, Result};
use crate::Real;
use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Original post or repost of someone else's post.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostKind {
    Original,
    Repost,
}

/// One row of the post log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PostEvent {
    pub user_id: String,
    pub post_id: String,
    pub ts: DateTime<Utc>,
    pub kind: PostKind,
    /// Author of the reposted content (reposts only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_user_id: Option<String>,
    /// Id of the reposted post (reposts only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_post_id: Option<String>,
    /// Content hate score in [0, 1] from the upstream classifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hate_score: Option<Real>,
    /// Follower count of the source account at repost time (reposts only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_followers: Option<u64>,
    /// Lifetime status count of the source account (reposts only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_statuses: Option<u64>,
    /// Normalized content tokens, for keyword measures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_tokens: Option<Vec<String>>,
}

/// Analysis period label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Pre,
    During,
    Post,
}

impl Period {
    pub const ALL: [Period; 3] = [Period::Pre, Period::During, Period::Post];
}

/// Calendar month (UTC).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn of(ts: DateTime<Utc>) -> Month {
        Month { year: ts.year(), month: ts.month() }
    }

    pub fn start(&self) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(self.year, self.month, 1, 0, 0, 0).unwrap()
    }

    pub fn next(&self) -> Month {
        if self.month == 12 {
            Month { year: self.year + 1, month: 1 }
        } else {
            Month { year: self.year, month: self.month + 1 }
        }
    }
}

impl std::fmt::Display for Month {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Three half-open UTC windows `[start, end)`, strictly ordered and
/// non-overlapping.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub pre: (DateTime<Utc>, DateTime<Utc>),
    pub during: (DateTime<Utc>, DateTime<Utc>),
    pub post: (DateTime<Utc>, DateTime<Utc>),
}

impl PeriodSpec {
    pub fn new(
        pre: (DateTime<Utc>, DateTime<Utc>),
        during: (DateTime<Utc>, DateTime<Utc>),
        post: (DateTime<Utc>, DateTime<Utc>),
    ) -> Result<Self> {
        for (name, (s, e)) in [("pre", pre), ("during", during), ("post", post)] {
            if s >= e {
                return Err(Error::invalid(format!("{name} period is empty or inverted")));
            }
        }
        if pre.1 > during.0 || during.1 > post.0 {
            return Err(Error::invalid("periods must be ordered and non-overlapping"));
        }
        Ok(PeriodSpec { pre, during, post })
    }

    pub fn window(&self, p: Period) -> (DateTime<Utc>, DateTime<Utc>) {
        match p {
            Period::Pre => self.pre,
            Period::During => self.during,
            Period::Post => self.post,
        }
    }

    /// Period containing `ts`, if any.
    pub fn period_of(&self, ts: DateTime<Utc>) -> Option<Period> {
        Period::ALL
            .into_iter()
            .find(|&p| {
                let (s, e) = self.window(p);
                ts >= s && ts < e
            })
    }

    /// Calendar months intersecting a period, in order.
    pub fn months(&self, p: Period) -> Vec<Month> {
        let (s, e) = self.window(p);
        let mut out = Vec::new();
        let mut m = Month::of(s);
        while m.start() < e {
            out.push(m);
            m = m.next();
        }
        out
    }
}

/// How a post counts toward the hate outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HateMeasure {
    /// Count posts with `hate_score > c` (strict).
    Threshold { c: Real },
    /// Sum raw hate scores (missing scores contribute 0).
    RawScore,
    /// Count posts whose tokens intersect the keyword list.
    Keywords { keywords: BTreeSet<String> },
}

impl HateMeasure {
    /// Contribution of one post to the monthly count.
    pub fn score(&self, post: &PostEvent) -> Real {
        match self {
            HateMeasure::Threshold { c } => match post.hate_score {
                Some(s) if s > *c => 1.0,
                _ => 0.0,
            },
            HateMeasure::RawScore => post.hate_score.unwrap_or(0.0),
            HateMeasure::Keywords { keywords } => match &post.text_tokens {
                Some(tokens) if tokens.iter().any(|t| keywords.contains(t)) => 1.0,
                _ => 0.0,
            },
        }
    }
}

/// Which post kinds enter the outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryFilter {
    All,
    Original,
    Repost,
}

impl CategoryFilter {
    fn admits(&self, kind: PostKind) -> bool {
        matches!(
            (self, kind),
            (CategoryFilter::All, _)
                | (CategoryFilter::Original, PostKind::Original)
                | (CategoryFilter::Repost, PostKind::Repost)
        )
    }
}

/// One month column of the panel: a calendar month inside one period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthCol {
    pub period: Period,
    pub month: Month,
}

/// How the difference-adjustment constant is pooled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPooling {
    /// α from the full estimation sample (default).
    Pooled,
    /// α from control users only.
    ControlOnly,
}

/// Per-user monthly and period outcomes.
#[derive(Clone, Debug)]
pub struct OutcomePanel {
    /// User ids, sorted lexicographically; all vectors align with this.
    pub ids: Vec<String>,
    pub month_cols: Vec<MonthCol>,
    /// Raw monthly counts under the measure (absent for synthetic panels).
    pub counts: Option<Vec<Vec<Real>>>,
    /// Monthly `ln(1 + count)` outcomes, `[user][month_col]`.
    pub logs: Vec<Vec<Real>>,
    pub y_pre: Vec<Real>,
    pub y_during: Vec<Real>,
    pub y_post: Vec<Real>,
    /// `y_during - α_during · y_pre`, after [`difference_adjust`].
    pub delta_during: Vec<Real>,
    /// `y_post - α_post · y_pre`, after [`difference_adjust`].
    pub delta_post: Vec<Real>,
    pub alpha_during: Option<Real>,
    pub alpha_post: Option<Real>,
    /// Total pre-period posts of any kind (baseline activity).
    pub activity_pre: Vec<Real>,
    /// Measure-weighted share of pre-period posts (0 for inactive users).
    pub hate_share_pre: Vec<Real>,
    pub measure: HateMeasure,
    pub category: CategoryFilter,
    pub periods: PeriodSpec,
}

impl OutcomePanel {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.ids.binary_search_by(|x| x.as_str().cmp(id)).ok().map(|i| i as u32)
    }

    pub fn y(&self, p: Period) -> &[Real] {
        match p {
            Period::Pre => &self.y_pre,
            Period::During => &self.y_during,
            Period::Post => &self.y_post,
        }
    }

    /// Month columns belonging to one period.
    pub fn cols_of(&self, p: Period) -> Vec<usize> {
        self.month_cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.period == p)
            .map(|(i, _)| i)
            .collect()
    }

    /// Panel with directly specified period outcomes (generators, tests).
    pub fn synthetic(
        ids: Vec<String>,
        y_pre: Vec<Real>,
        y_during: Vec<Real>,
        y_post: Vec<Real>,
        activity_pre: Vec<Real>,
        periods: PeriodSpec,
    ) -> Self {
        let n = ids.len();
        assert!(
            [y_pre.len(), y_during.len(), y_post.len(), activity_pre.len()] == [n, n, n, n],
            "misaligned synthetic panel"
        );
        OutcomePanel {
            ids,
            month_cols: Vec::new(),
            counts: None,
            logs: vec![Vec::new(); n],
            y_pre,
            y_during,
            y_post,
            delta_during: vec![0.0; n],
            delta_post: vec![0.0; n],
            alpha_during: None,
            alpha_post: None,
            activity_pre,
            hate_share_pre: vec![0.0; n],
            measure: HateMeasure::Threshold { c: 0.5 },
            category: CategoryFilter::All,
            periods,
        }
    }

    /// Attach synthetic monthly logs (must cover the spec's months).
    pub fn with_monthly(mut self, month_cols: Vec<MonthCol>, logs: Vec<Vec<Real>>) -> Self {
        assert_eq!(logs.len(), self.n());
        for row in &logs {
            assert_eq!(row.len(), month_cols.len());
        }
        self.month_cols = month_cols;
        self.logs = logs;
        self
    }
}

/// Build the monthly outcome panel.
///
/// `roster` fixes the user universe (users without a single post keep
/// all-zero rows); without it the universe is everyone appearing in the log.
/// Posts outside every period are ignored.
pub fn build_panel(
    posts: &[PostEvent],
    periods: &PeriodSpec,
    measure: &HateMeasure,
    category: CategoryFilter,
    roster: Option<&[String]>,
) -> Result<OutcomePanel> {
    let ids: Vec<String> = match roster {
        Some(r) => {
            let mut v = r.to_vec();
            v.sort();
            v.dedup();
            v
        }
        None => {
            let mut v: Vec<String> = posts.iter().map(|p| p.user_id.clone()).collect();
            v.sort();
            v.dedup();
            v
        }
    };
    if ids.is_empty() {
        return Err(Error::invalid("outcome panel has no users"));
    }

    let mut month_cols: Vec<MonthCol> = Vec::new();
    for p in Period::ALL {
        for m in periods.months(p) {
            month_cols.push(MonthCol { period: p, month: m });
        }
    }
    let col_of = |p: Period, m: Month| -> usize {
        month_cols
            .iter()
            .position(|c| c.period == p && c.month == m)
            .expect("month column exists")
    };

    let n = ids.len();
    let idx = |id: &str| ids.binary_search_by(|x| x.as_str().cmp(id)).ok();
    let mut counts = vec![vec![0.0; month_cols.len()]; n];
    let mut activity_pre = vec![0.0; n];
    let mut hate_pre = vec![0.0; n];
    for post in posts {
        let Some(i) = idx(&post.user_id) else { continue };
        let Some(p) = periods.period_of(post.ts) else { continue };
        if p == Period::Pre {
            activity_pre[i] += 1.0;
            hate_pre[i] += measure.score(post);
        }
        if !category.admits(post.kind) {
            continue;
        }
        counts[i][col_of(p, Month::of(post.ts))] += measure.score(post);
    }

    let logs: Vec<Vec<Real>> =
        counts.iter().map(|row| row.iter().map(|&c| (1.0 + c).ln()).collect()).collect();
    let period_mean = |row: &[Real], p: Period| -> Real {
        let cols: Vec<usize> = month_cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.period == p)
            .map(|(i, _)| i)
            .collect();
        row_mean(row, &cols)
    };
    let y_pre: Vec<Real> = logs.iter().map(|r| period_mean(r, Period::Pre)).collect();
    let y_during: Vec<Real> = logs.iter().map(|r| period_mean(r, Period::During)).collect();
    let y_post: Vec<Real> = logs.iter().map(|r| period_mean(r, Period::Post)).collect();
    let hate_share_pre = activity_pre
        .iter()
        .zip(&hate_pre)
        .map(|(&a, &h)| if a > 0.0 { h / a } else { 0.0 })
        .collect();

    Ok(OutcomePanel {
        ids,
        month_cols,
        counts: Some(counts),
        logs,
        y_pre,
        y_during,
        y_post,
        delta_during: vec![0.0; n],
        delta_post: vec![0.0; n],
        alpha_during: None,
        alpha_post: None,
        activity_pre,
        hate_share_pre,
        measure: measure.clone(),
        category,
        periods: *periods,
    })
}

fn row_mean(row: &[Real], cols: &[usize]) -> Real {
    if cols.is_empty() {
        return 0.0;
    }
    cols.iter().map(|&c| row[c]).sum::<Real>() / cols.len() as Real
}

/// Fill `delta_during` / `delta_post` with difference-adjusted outcomes.
///
/// The rescale constants satisfy mean(α · Y_pre) = mean(Y_period) on the
/// pooling sample, one constant per period. `z` is only consulted for
/// [`AlphaPooling::ControlOnly`].
pub fn difference_adjust(
    panel: &mut OutcomePanel,
    pooling: AlphaPooling,
    z: Option<&[bool]>,
) -> Result<(Real, Real)> {
    let n = panel.n();
    let sample: Vec<usize> = match pooling {
        AlphaPooling::Pooled => (0..n).collect(),
        AlphaPooling::ControlOnly => {
            let z = z.ok_or_else(|| {
                Error::invalid("control-only pooling needs an assignment vector")
            })?;
            if z.len() != n {
                return Err(Error::invalid("assignment vector misaligned with panel"));
            }
            (0..n).filter(|&i| !z[i]).collect()
        }
    };
    if sample.is_empty() {
        return Err(Error::invalid("empty pooling sample for difference adjustment"));
    }
    let mean = |v: &[Real]| sample.iter().map(|&i| v[i]).sum::<Real>() / sample.len() as Real;
    let pre_mean = mean(&panel.y_pre);
    if pre_mean == 0.0 {
        return Err(Error::invalid(
            "pre-period outcomes are identically zero; difference adjustment undefined",
        ));
    }
    let alpha_during = mean(&panel.y_during) / pre_mean;
    let alpha_post = mean(&panel.y_post) / pre_mean;
    for i in 0..n {
        panel.delta_during[i] = panel.y_during[i] - alpha_during * panel.y_pre[i];
        panel.delta_post[i] = panel.y_post[i] - alpha_post * panel.y_pre[i];
    }
    panel.alpha_during = Some(alpha_during);
    panel.alpha_post = Some(alpha_post);
    Ok((alpha_during, alpha_post))
}

/// One engagement with scored content (for the eligibility screen).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub user_id: String,
    pub ts: DateTime<Utc>,
    /// Hate score of the engaged content.
    pub hate_score: Real,
    /// Ethnic-target score of the engaged content.
    pub target_score: Real,
}

/// Users with at least `min_events` engagements in the window whose content
/// scores exceed both thresholds (strictly). Returns sorted ids.
pub fn eligibility_filter(
    events: &[EngagementEvent],
    window: (DateTime<Utc>, DateTime<Utc>),
    min_events: usize,
    hate_min: Real,
    target_min: Real,
) -> Vec<String> {
    let mut counts: std::collections::BTreeMap<&str, usize> = Default::default();
    for e in events {
        if e.ts >= window.0 && e.ts < window.1 && e.hate_score > hate_min && e.target_score > target_min
        {
            *counts.entry(e.user_id.as_str()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, c)| c >= min_events)
        .map(|(id, _)| id.to_string())
        .collect()
}

/// Rank tokens by how much more frequent they are in the hate corpus.
///
/// Score = relative frequency in `hate_docs` over relative frequency in
/// `other_docs`, with add-1 smoothing on counts (vocabulary = union).
/// Ties: higher hate-corpus count first, then lexicographic. `k` beyond the
/// vocabulary returns the full ranking.
pub fn keyword_rank(
    hate_docs: &[Vec<String>],
    other_docs: &[Vec<String>],
    k: usize,
) -> Result<Vec<(String, Real)>> {
    if hate_docs.is_empty() || other_docs.is_empty() {
        return Err(Error::invalid("keyword ranking needs both corpora non-empty"));
    }
    let tally = |docs: &[Vec<String>]| {
        let mut m: std::collections::BTreeMap<String, u64> = Default::default();
        let mut total = 0u64;
        for d in docs {
            for t in d {
                *m.entry(t.clone()).or_default() += 1;
                total += 1;
            }
        }
        (m, total)
    };
    let (hc, hn) = tally(hate_docs);
    let (oc, on) = tally(other_docs);
    let vocab: BTreeSet<&String> = hc.keys().chain(oc.keys()).collect();
    let v = vocab.len() as Real;
    let mut scored: Vec<(String, Real, u64)> = vocab
        .into_iter()
        .map(|t| {
            let h = *hc.get(t).unwrap_or(&0);
            let o = *oc.get(t).unwrap_or(&0);
            let rh = (h as Real + 1.0) / (hn as Real + v);
            let ro = (o as Real + 1.0) / (on as Real + v);
            (t.clone(), rh / ro, h)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(t, s, _)| (t, s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    pub(crate) fn spec_periods() -> PeriodSpec {
        PeriodSpec::new(
            (ts("2023-01-01T00:00:00Z"), ts("2023-04-01T00:00:00Z")),
            (ts("2023-04-01T00:00:00Z"), ts("2023-08-01T00:00:00Z")),
            (ts("2023-08-01T00:00:00Z"), ts("2023-11-01T00:00:00Z")),
        )
        .unwrap()
    }

    fn post(user: &str, when: &str, score: Real, kind: PostKind) -> PostEvent {
        PostEvent {
            user_id: user.into(),
            post_id: format!("p{when}{user}"),
            ts: ts(when),
            kind,
            source_user_id: None,
            source_post_id: None,
            hate_score: Some(score),
            source_followers: None,
            source_statuses: None,
            text_tokens: None,
        }
    }

    #[test]
    fn period_validation_and_month_listing() {
        let p = spec_periods();
        assert_eq!(p.months(Period::Pre).len(), 3);
        assert_eq!(p.months(Period::During).len(), 4);
        assert_eq!(p.months(Period::Post).len(), 3);
        assert!(PeriodSpec::new(
            (ts("2023-02-01T00:00:00Z"), ts("2023-01-01T00:00:00Z")),
            (ts("2023-02-01T00:00:00Z"), ts("2023-03-01T00:00:00Z")),
            (ts("2023-03-01T00:00:00Z"), ts("2023-04-01T00:00:00Z")),
        )
        .is_err());
        // overlap
        assert!(PeriodSpec::new(
            (ts("2023-01-01T00:00:00Z"), ts("2023-02-15T00:00:00Z")),
            (ts("2023-02-01T00:00:00Z"), ts("2023-03-01T00:00:00Z")),
            (ts("2023-03-01T00:00:00Z"), ts("2023-04-01T00:00:00Z")),
        )
        .is_err());
    }

    #[test]
    fn three_hate_posts_make_ln_four() {
        let posts = vec![
            post("a", "2023-04-03T12:00:00Z", 0.9, PostKind::Original),
            post("a", "2023-04-10T12:00:00Z", 0.8, PostKind::Original),
            post("a", "2023-04-20T12:00:00Z", 0.7, PostKind::Repost),
            post("a", "2023-04-21T12:00:00Z", 0.2, PostKind::Original), // below threshold
            post("a", "2023-05-01T12:00:00Z", 0.9, PostKind::Original), // next month
        ];
        let panel = build_panel(
            &posts,
            &spec_periods(),
            &HateMeasure::Threshold { c: 0.5 },
            CategoryFilter::All,
            None,
        )
        .unwrap();
        let col = panel
            .month_cols
            .iter()
            .position(|c| c.period == Period::During && c.month == Month { year: 2023, month: 4 })
            .unwrap();
        assert!((panel.logs[0][col] - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn categories_are_additive_on_counts() {
        let mut posts = Vec::new();
        let mut rng = crate::rng::substream(3, "outcomes-test", 0);
        use rand::Rng;
        for i in 0..200 {
            let user = format!("u{:02}", rng.gen_range(0..8));
            let day = 1 + (i % 27) as u32;
            let month = [1, 2, 4, 6, 9][rng.gen_range(0..5)];
            let kind = if rng.gen_bool(0.5) { PostKind::Original } else { PostKind::Repost };
            posts.push(post(
                &user,
                &format!("2023-{month:02}-{day:02}T00:00:00Z"),
                rng.gen_range(0.0..1.0),
                kind,
            ));
        }
        let measure = HateMeasure::Threshold { c: 0.3 };
        let all =
            build_panel(&posts, &spec_periods(), &measure, CategoryFilter::All, None).unwrap();
        let orig =
            build_panel(&posts, &spec_periods(), &measure, CategoryFilter::Original, None)
                .unwrap();
        let rep =
            build_panel(&posts, &spec_periods(), &measure, CategoryFilter::Repost, None).unwrap();
        let (ca, co, cr) =
            (all.counts.as_ref().unwrap(), orig.counts.as_ref().unwrap(), rep.counts.as_ref().unwrap());
        for i in 0..all.n() {
            for c in 0..all.month_cols.len() {
                assert_eq!(ca[i][c], co[i][c] + cr[i][c]);
            }
        }
    }

    #[test]
    fn roster_keeps_zero_post_users() {
        let posts = vec![post("a", "2023-04-03T12:00:00Z", 0.9, PostKind::Original)];
        let roster = vec!["a".to_string(), "b".to_string()];
        let panel = build_panel(
            &posts,
            &spec_periods(),
            &HateMeasure::Threshold { c: 0.5 },
            CategoryFilter::All,
            Some(&roster),
        )
        .unwrap();
        assert_eq!(panel.n(), 2);
        let b = panel.index_of("b").unwrap() as usize;
        assert_eq!(panel.y_pre[b], 0.0);
        assert_eq!(panel.y_during[b], 0.0);
        assert!(panel.logs[b].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn straddling_month_splits_between_periods() {
        // during ends mid-June, post starts mid-June
        let periods = PeriodSpec::new(
            (ts("2023-01-01T00:00:00Z"), ts("2023-03-01T00:00:00Z")),
            (ts("2023-03-01T00:00:00Z"), ts("2023-06-15T00:00:00Z")),
            (ts("2023-06-15T00:00:00Z"), ts("2023-09-01T00:00:00Z")),
        )
        .unwrap();
        let posts = vec![
            post("a", "2023-06-10T00:00:00Z", 0.9, PostKind::Original),
            post("a", "2023-06-20T00:00:00Z", 0.9, PostKind::Original),
        ];
        let panel = build_panel(
            &posts,
            &periods,
            &HateMeasure::Threshold { c: 0.5 },
            CategoryFilter::All,
            None,
        )
        .unwrap();
        let june = Month { year: 2023, month: 6 };
        let cd = panel
            .month_cols
            .iter()
            .position(|c| c.period == Period::During && c.month == june)
            .unwrap();
        let cp = panel
            .month_cols
            .iter()
            .position(|c| c.period == Period::Post && c.month == june)
            .unwrap();
        let counts = panel.counts.as_ref().unwrap();
        assert_eq!(counts[0][cd], 1.0);
        assert_eq!(counts[0][cp], 1.0);
    }

    #[test]
    fn doubling_activity_gives_alpha_two_and_zero_deltas() {
        let ids: Vec<String> = (0..6).map(|i| format!("u{i}")).collect();
        let y_pre: Vec<Real> = (1..=6).map(|i| i as Real).collect();
        let y_during: Vec<Real> = y_pre.iter().map(|&v| 2.0 * v).collect();
        let y_post = y_pre.clone();
        let mut panel = OutcomePanel::synthetic(
            ids,
            y_pre.clone(),
            y_during,
            y_post,
            vec![1.0; 6],
            spec_periods(),
        );
        let (ad, ap) = difference_adjust(&mut panel, AlphaPooling::Pooled, None).unwrap();
        assert!((ad - 2.0).abs() < 1e-12);
        assert!((ap - 1.0).abs() < 1e-12);
        for i in 0..6 {
            assert!(panel.delta_during[i].abs() < 1e-12);
            assert!(panel.delta_post[i].abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pre_mean_is_an_error() {
        let mut panel = OutcomePanel::synthetic(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            spec_periods(),
        );
        assert!(difference_adjust(&mut panel, AlphaPooling::Pooled, None).is_err());
    }

    #[test]
    fn control_only_alpha_uses_controls() {
        let mut panel = OutcomePanel::synthetic(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![3.0, 3.0, 1.0, 1.0],
            vec![1.0; 4],
            vec![1.0; 4],
            spec_periods(),
        );
        let z = vec![true, true, false, false];
        let (ad, _) = difference_adjust(&mut panel, AlphaPooling::ControlOnly, Some(&z)).unwrap();
        assert!((ad - 1.0).abs() < 1e-12); // controls did not move
    }

    #[test]
    fn eligibility_needs_two_strictly_qualifying_events() {
        let w = (ts("2023-01-01T00:00:00Z"), ts("2023-04-01T00:00:00Z"));
        let ev = |u: &str, when: &str, h: Real, t: Real| EngagementEvent {
            user_id: u.into(),
            ts: ts(when),
            hate_score: h,
            target_score: t,
        };
        let events = vec![
            ev("a", "2023-01-05T00:00:00Z", 0.95, 0.6),
            ev("a", "2023-02-05T00:00:00Z", 0.92, 0.7),
            ev("b", "2023-01-05T00:00:00Z", 0.95, 0.6), // only one
            ev("c", "2023-01-05T00:00:00Z", 0.9, 0.6),  // 0.9 not > 0.9
            ev("c", "2023-02-05T00:00:00Z", 0.95, 0.5), // 0.5 not > 0.5
            ev("c", "2023-03-05T00:00:00Z", 0.95, 0.6),
            ev("d", "2023-05-05T00:00:00Z", 0.95, 0.6), // outside window
            ev("d", "2023-01-05T00:00:00Z", 0.95, 0.6),
        ];
        let elig = eligibility_filter(&events, w, 2, 0.9, 0.5);
        assert_eq!(elig, vec!["a".to_string()]);
    }

    #[test]
    fn keyword_ranking_matches_hand_tally() {
        let hate: Vec<Vec<String>> = vec![
            vec!["slur".into(), "the".into(), "slur".into()],
            vec!["attack".into(), "the".into()],
        ];
        let other: Vec<Vec<String>> =
            vec![vec!["the".into(), "cat".into()], vec!["the".into(), "attack".into()]];
        // vocab = {slur, the, attack, cat}, V=4, hate total=5, other total=4
        // slur: (2+1)/9 / (0+1)/8 = 0.3333/0.125 = 2.6667
        // attack: (1+1)/9 / (1+1)/8 = 0.2222/0.25 = 0.8889
        // the: (2+1)/9 / (2+1)/8 = 0.3333/0.375 = 0.8889  (tie with attack,
        //      broken by hate count: the=2 > attack=1)
        // cat: (0+1)/9 / (1+1)/8 = 0.1111/0.25 = 0.4444
        let ranked = keyword_rank(&hate, &other, 10).unwrap();
        let names: Vec<&str> = ranked.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(names, vec!["slur", "the", "attack", "cat"]);
        assert!((ranked[0].1 - (3.0 / 9.0) / (1.0 / 8.0)).abs() < 1e-12);
        assert!(keyword_rank(&hate, &[], 3).is_err());
        let top1 = keyword_rank(&hate, &other, 1).unwrap();
        assert_eq!(top1.len(), 1);
    }
}
