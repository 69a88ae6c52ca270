//! Shared argument parsing and alignment plumbing.

use chrono::{DateTime, NaiveDate, Utc};
use netx_core::design::Assignment;
use netx_core::error::{Error, Result};
use netx_core::io::sha256_file;
use netx_core::netgraph::ClusterAssignment;
use netx_core::outcomes::{AlphaPooling, CategoryFilter, HateMeasure, PeriodSpec};
use netx_core::report::Provenance;
use netx_core::Real;
use serde::de::DeserializeOwned;
use std::path::{Path, PathBuf};

/// Parse one timestamp: RFC 3339, or a bare `YYYY-MM-DD` taken as midnight UTC.
pub fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = s.parse::<DateTime<Utc>>() {
        return Ok(t);
    }
    if let Ok(d) = s.parse::<NaiveDate>() {
        return Ok(DateTime::from_naive_utc_and_offset(
            d.and_hms_opt(0, 0, 0).expect("midnight exists"),
            Utc,
        ));
    }
    Err(Error::invalid(format!(
        "cannot parse time '{s}' (expected RFC 3339 or YYYY-MM-DD)"
    )))
}

/// Parse a half-open window `START..END`.
pub fn parse_window(s: &str) -> Result<(DateTime<Utc>, DateTime<Utc>)> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::invalid(format!("window '{s}' must look like START..END")))?;
    let w = (parse_ts(a.trim())?, parse_ts(b.trim())?);
    if w.1 <= w.0 {
        return Err(Error::invalid(format!("window '{s}' is empty or inverted")));
    }
    Ok(w)
}

/// Assemble the three analysis periods from window flags.
pub fn parse_periods(pre: &str, during: &str, post: &str) -> Result<PeriodSpec> {
    PeriodSpec::new(parse_window(pre)?, parse_window(during)?, parse_window(post)?)
}

/// Parse a measure spec: `threshold:<c>`, `raw_score`, or
/// `keywords:<w1,w2,...>`.
pub fn parse_measure(s: &str) -> Result<HateMeasure> {
    let (head, tail) = match s.split_once(':') {
        Some((h, t)) => (h, Some(t)),
        None => (s, None),
    };
    match (head, tail) {
        ("threshold", Some(c)) => {
            let c: Real = c
                .parse()
                .map_err(|_| Error::invalid(format!("threshold '{c}' is not a number")))?;
            Ok(HateMeasure::Threshold { c })
        }
        ("raw_score", None) => Ok(HateMeasure::RawScore),
        ("keywords", Some(list)) => {
            let keywords: std::collections::BTreeSet<String> = list
                .split(',')
                .map(|w| w.trim().to_string())
                .filter(|w| !w.is_empty())
                .collect();
            if keywords.is_empty() {
                return Err(Error::invalid("keyword measure needs at least one word"));
            }
            Ok(HateMeasure::Keywords { keywords })
        }
        _ => Err(Error::invalid(format!(
            "unknown measure '{s}' (expected threshold:<c>, raw_score, or keywords:<w1,w2,...>)"
        ))),
    }
}

pub fn parse_category(s: &str) -> Result<CategoryFilter> {
    match s {
        "all" => Ok(CategoryFilter::All),
        "original" => Ok(CategoryFilter::Original),
        "repost" => Ok(CategoryFilter::Repost),
        _ => Err(Error::invalid(format!(
            "unknown category '{s}' (expected all, original, or repost)"
        ))),
    }
}

/// Difference-adjustment pooling flag; `None` keeps plain differences.
pub fn parse_alpha(s: &str) -> Result<Option<AlphaPooling>> {
    match s {
        "pooled" => Ok(Some(AlphaPooling::Pooled)),
        "control_only" => Ok(Some(AlphaPooling::ControlOnly)),
        "none" => Ok(None),
        _ => Err(Error::invalid(format!(
            "unknown alpha pooling '{s}' (expected pooled, control_only, or none)"
        ))),
    }
}

/// Read and deserialize a TOML file, mapping parse errors to the offending
/// line.
pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1)
            .unwrap_or(1);
        Error::parse(path, line as u64, e.message().to_string())
    })
}

/// The clustering recorded inside an assignment, as its own value.
pub fn clusters_of_assignment(a: &Assignment) -> Result<ClusterAssignment> {
    ClusterAssignment::from_pairs(
        a.ids
            .iter()
            .zip(&a.cluster_of)
            .map(|(id, &c)| (id.clone(), c as u64, false))
            .collect(),
    )
}

/// Indices of `wanted` ids inside the sorted `universe`; errors name the
/// first missing id and the count.
pub fn align_ids(universe: &[String], wanted: &[String], what: &str) -> Result<Vec<usize>> {
    let mut idx = Vec::with_capacity(wanted.len());
    let mut missing = 0usize;
    let mut first_missing = None;
    for id in wanted {
        match universe.binary_search_by(|x| x.as_str().cmp(id)) {
            Ok(i) => idx.push(i),
            Err(_) => {
                missing += 1;
                first_missing.get_or_insert_with(|| id.clone());
            }
        }
    }
    if missing > 0 {
        return Err(Error::invalid(format!(
            "{missing} id(s) missing from {what} (first: {})",
            first_missing.unwrap_or_default()
        )));
    }
    Ok(idx)
}

/// Record an input file's content hash into the provenance block.
pub fn hash_input(prov: &mut Provenance, path: &Path) -> Result<()> {
    prov.inputs.insert(path.display().to_string(), sha256_file(path)?);
    Ok(())
}

/// Tracks files created by one invocation so a failure can sweep them up
/// instead of leaving a half-written output directory behind.
#[derive(Default)]
pub struct OutputTracker {
    files: Vec<PathBuf>,
}

impl OutputTracker {
    pub fn new() -> OutputTracker {
        OutputTracker::default()
    }

    pub fn add(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    /// Also register the meta sidecar io::write_* helpers emit.
    pub fn add_with_meta(&mut self, path: &Path) {
        self.add(path);
        self.add(&netx_core::io::meta_path(path));
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    /// Best-effort removal of everything written so far.
    pub fn sweep(&self) {
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
    }
}

/// Run `body`, deleting any tracked outputs if it fails.
pub fn with_cleanup<F>(body: F) -> Result<()>
where
    F: FnOnce(&mut OutputTracker) -> Result<()>,
{
    let mut tracker = OutputTracker::new();
    match body(&mut tracker) {
        Ok(()) => Ok(()),
        Err(e) => {
            tracker.sweep();
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_accept_dates_and_timestamps() {
        let (a, b) = parse_window("2023-01-01..2023-03-01").unwrap();
        assert_eq!(a.to_rfc3339(), "2023-01-01T00:00:00+00:00");
        assert!(b > a);
        assert!(parse_window("2023-03-01..2023-01-01").is_err());
        assert!(parse_window("2023-01-01").is_err());
        let (c, _) = parse_window("2023-01-01T06:30:00Z..2023-01-02T00:00:00Z").unwrap();
        assert_eq!(c.to_rfc3339(), "2023-01-01T06:30:00+00:00");
    }

    #[test]
    fn measures_parse_and_reject_garbage() {
        assert!(matches!(parse_measure("threshold:0.5"), Ok(HateMeasure::Threshold { c }) if c == 0.5));
        assert!(matches!(parse_measure("raw_score"), Ok(HateMeasure::RawScore)));
        assert!(matches!(parse_measure("keywords:a, b"), Ok(HateMeasure::Keywords { .. })));
        assert!(parse_measure("keywords:").is_err());
        assert!(parse_measure("tfidf").is_err());
    }

    #[test]
    fn toml_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "a = 1\nb = [not toml\n").unwrap();
        let err = read_toml::<toml::Value>(&path).unwrap_err();
        assert!(err.to_string().contains("bad.toml:2"), "{err}");
    }
}
