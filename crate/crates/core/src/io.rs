//! File formats and atomic persistence.
//!
//! Everything is written atomically (temp file in the target directory,
//! then rename) so a crashed run never leaves a truncated artifact. Row
//! formats are CSV with headers; post logs are JSON Lines; structured
//! results are pretty-printed JSON. Readers attach 1-based line numbers to
//! parse failures.
//!
//! Artifacts that need side information to be reloadable (assignments,
//! panels) get a `<stem>.meta.json` sidecar next to the data file.

use crate::design::{Assignment, DesignParams};
use crate::error::{Error, Result};
use crate::netgraph::ClusterAssignment;
use crate::outcomes::{
    AlphaPooling, CategoryFilter, HateMeasure, MonthCol, OutcomePanel, PeriodSpec, PostEvent,
};
use crate::Real;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::io(path.display().to_string(), source)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::parse(path.display().to_string(), line as u64, msg)
}

/// Write `bytes` to `path` atomically (same-directory temp file + rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let stem = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{stem}.tmp-{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io_err(path, e)
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    body.push('\n');
    atomic_write(path, body.as_bytes())
}

/// Read a whole JSON document.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let body = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&body).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sidecar path: `dir/name.ext` -> `dir/name.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

// ---------------------------------------------------------------- post logs

/// Read a JSON Lines post log (blank lines allowed).
pub fn read_posts_jsonl(path: &Path) -> Result<Vec<PostEvent>> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut posts = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let post: PostEvent =
            serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        posts.push(post);
    }
    Ok(posts)
}

/// Write a post log as JSON Lines.
pub fn write_posts_jsonl(path: &Path, posts: &[PostEvent]) -> Result<()> {
    let mut body = String::new();
    for p in posts {
        body.push_str(
            &serde_json::to_string(p).map_err(|e| Error::invalid(format!("serialize: {e}")))?,
        );
        body.push('\n');
    }
    atomic_write(path, body.as_bytes())
}

// -------------------------------------------------------------------- edges

#[derive(Serialize, Deserialize)]
struct EdgeRow {
    src: String,
    dst: String,
    weight: Real,
}

/// Read a weighted edge list (`src,dst,weight`).
pub fn read_edges_csv(path: &Path) -> Result<Vec<(String, String, Real)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<EdgeRow>() {
        let row = rec.map_err(|e| csv_err(path, e))?;
        out.push((row.src, row.dst, row.weight));
    }
    Ok(out)
}

/// Write a weighted edge list.
pub fn write_edges_csv(path: &Path, edges: &[(String, String, Real)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (src, dst, weight) in edges {
        w.serialize(EdgeRow { src: src.clone(), dst: dst.clone(), weight: *weight })
            .map_err(|e| csv_err(path, e))?;
    }
    atomic_write(path, &w.into_inner().expect("in-memory writer"))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        // opening failed outright: report it as an IO problem, not line 0
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!("kind checked above");
    }
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or_else(|| match e.kind() {
            csv::ErrorKind::Deserialize { pos: Some(p), .. } => p.line() as usize,
            _ => 0,
        });
    parse_err(path, line, e.to_string())
}

// ----------------------------------------------------------------- clusters

#[derive(Serialize, Deserialize)]
struct ClusterRow {
    user_id: String,
    cluster: u64,
    centroid: bool,
}

/// Write a cluster assignment (`user_id,cluster,centroid`).
pub fn write_clusters_csv(path: &Path, clusters: &ClusterAssignment) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for i in 0..clusters.n() {
        let c = clusters.cluster_of[i];
        w.serialize(ClusterRow {
            user_id: clusters.ids[i].clone(),
            cluster: c as u64,
            centroid: clusters.centroids[c as usize] == Some(i as u32),
        })
        .map_err(|e| csv_err(path, e))?;
    }
    atomic_write(path, &w.into_inner().expect("in-memory writer"))
}

/// Read a cluster assignment back.
pub fn read_clusters_csv(path: &Path) -> Result<ClusterAssignment> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<ClusterRow>() {
        let row = rec.map_err(|e| csv_err(path, e))?;
        rows.push((row.user_id, row.cluster, row.centroid));
    }
    ClusterAssignment::from_pairs(rows)
}

// --------------------------------------------------------------- assignment

#[derive(Serialize, Deserialize)]
struct AssignRow {
    user_id: String,
    cluster: u64,
    cluster_bit: bool,
    flip: bool,
    treated: bool,
}

/// Sidecar recording how an assignment was drawn.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssignmentMeta {
    pub p_t: Real,
    pub p_hp: Real,
    pub seed: u64,
    pub n: usize,
    pub n_clusters: usize,
    pub n_treated: usize,
}

/// Write an assignment plus its `.meta.json` sidecar.
pub fn write_assignment_csv(path: &Path, a: &Assignment) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for i in 0..a.n() {
        w.serialize(AssignRow {
            user_id: a.ids[i].clone(),
            cluster: a.cluster_of[i] as u64,
            cluster_bit: a.cluster_bits[a.cluster_of[i] as usize],
            flip: a.flips[i],
            treated: a.z[i],
        })
        .map_err(|e| csv_err(path, e))?;
    }
    atomic_write(path, &w.into_inner().expect("in-memory writer"))?;
    write_json(
        &meta_path(path),
        &AssignmentMeta {
            p_t: a.params.p_t,
            p_hp: a.params.p_hp,
            seed: a.seed,
            n: a.n(),
            n_clusters: a.cluster_bits.len(),
            n_treated: a.n_treated(),
        },
    )
}

/// Read an assignment and its sidecar back into a full [`Assignment`].
pub fn read_assignment_csv(path: &Path) -> Result<Assignment> {
    // open the CSV first so a missing file names the path the caller gave
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let meta: AssignmentMeta = read_json(&meta_path(path))?;
    let mut ids = Vec::new();
    let mut cluster_of = Vec::new();
    let mut flips = Vec::new();
    let mut z = Vec::new();
    let mut bits: Vec<Option<bool>> = Vec::new();
    for (i, rec) in rdr.deserialize::<AssignRow>().enumerate() {
        let row = rec.map_err(|e| csv_err(path, e))?;
        if row.treated != (row.cluster_bit ^ row.flip) {
            return Err(parse_err(path, i + 2, "treated != cluster_bit XOR flip"));
        }
        let c = row.cluster as usize;
        if bits.len() <= c {
            bits.resize(c + 1, None);
        }
        match bits[c] {
            None => bits[c] = Some(row.cluster_bit),
            Some(b) if b != row.cluster_bit => {
                return Err(parse_err(path, i + 2, "inconsistent cluster bit within a cluster"))
            }
            _ => {}
        }
        ids.push(row.user_id);
        cluster_of.push(row.cluster as u32);
        flips.push(row.flip);
        z.push(row.treated);
    }
    let cluster_bits: Vec<bool> = bits
        .into_iter()
        .enumerate()
        .map(|(c, b)| b.ok_or_else(|| parse_err(path, 0, format!("cluster {c} has no members"))))
        .collect::<Result<_>>()?;
    if !ids.windows(2).all(|w| w[0] < w[1]) {
        return Err(parse_err(path, 0, "assignment rows must be sorted by unique user_id"));
    }
    Ok(Assignment {
        ids,
        cluster_of,
        cluster_bits,
        flips,
        z,
        params: DesignParams::new(meta.p_t, meta.p_hp)?,
        seed: meta.seed,
    })
}

// -------------------------------------------------------------------- panel

/// Sidecar that makes a panel CSV self-describing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PanelMeta {
    pub periods: PeriodSpec,
    pub measure: HateMeasure,
    pub category: CategoryFilter,
    pub month_cols: Vec<MonthCol>,
    pub alpha_during: Option<Real>,
    pub alpha_post: Option<Real>,
    pub alpha_pooling: Option<AlphaPooling>,
    pub has_counts: bool,
}

/// Write a panel as CSV plus sidecar. Column layout: identity and period
/// summaries first, then one `log_*` column per month (and `cnt_*` when the
/// panel has raw counts).
pub fn write_panel_csv(path: &Path, panel: &OutcomePanel) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "user_id",
        "activity_pre",
        "hate_share_pre",
        "y_pre",
        "y_during",
        "y_post",
        "delta_during",
        "delta_post",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let tag = |c: &MonthCol| format!("{:?}_{}", c.period, c.month).to_lowercase();
    for c in &panel.month_cols {
        header.push(format!("log_{}", tag(c)));
    }
    if panel.counts.is_some() {
        for c in &panel.month_cols {
            header.push(format!("cnt_{}", tag(c)));
        }
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..panel.n() {
        let mut rec: Vec<String> = vec![
            panel.ids[i].clone(),
            fmt_real(panel.activity_pre[i]),
            fmt_real(panel.hate_share_pre[i]),
            fmt_real(panel.y_pre[i]),
            fmt_real(panel.y_during[i]),
            fmt_real(panel.y_post[i]),
            fmt_real(panel.delta_during[i]),
            fmt_real(panel.delta_post[i]),
        ];
        for v in &panel.logs[i] {
            rec.push(fmt_real(*v));
        }
        if let Some(counts) = &panel.counts {
            for v in &counts[i] {
                rec.push(fmt_real(*v));
            }
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    atomic_write(path, &w.into_inner().expect("in-memory writer"))?;
    write_json(
        &meta_path(path),
        &PanelMeta {
            periods: panel.periods,
            measure: panel.measure.clone(),
            category: panel.category,
            month_cols: panel.month_cols.clone(),
            alpha_during: panel.alpha_during,
            alpha_post: panel.alpha_post,
            alpha_pooling: None,
            has_counts: panel.counts.is_some(),
        },
    )
}

/// Exact round-trip decimal formatting.
fn fmt_real(v: Real) -> String {
    let mut buf = ryu_like(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("NaN") && !buf.contains("inf") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_like(v: Real) -> String {
    // shortest representation that parses back to the same bits
    let s = format!("{v}");
    if s.parse::<Real>().map(|r| r.to_bits()) == Ok(v.to_bits()) {
        s
    } else {
        format!("{v:?}")
    }
}

/// Read a panel CSV and its sidecar.
pub fn read_panel_csv(path: &Path) -> Result<OutcomePanel> {
    // open the CSV first so a missing panel names the path the caller gave
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let meta: PanelMeta = read_json(&meta_path(path))?;
    let nm = meta.month_cols.len();
    let fixed = 8usize;
    let want_cols = fixed + nm + if meta.has_counts { nm } else { 0 };

    let mut ids = Vec::new();
    let mut activity_pre = Vec::new();
    let mut hate_share_pre = Vec::new();
    let (mut y_pre, mut y_during, mut y_post) = (Vec::new(), Vec::new(), Vec::new());
    let (mut delta_during, mut delta_post) = (Vec::new(), Vec::new());
    let mut logs: Vec<Vec<Real>> = Vec::new();
    let mut counts: Vec<Vec<Real>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        if rec.len() != want_cols {
            return Err(parse_err(path, line, format!("expected {want_cols} columns, got {}", rec.len())));
        }
        let num = |j: usize| -> Result<Real> {
            rec[j].parse::<Real>().map_err(|e| parse_err(path, line, format!("column {j}: {e}")))
        };
        ids.push(rec[0].to_string());
        activity_pre.push(num(1)?);
        hate_share_pre.push(num(2)?);
        y_pre.push(num(3)?);
        y_during.push(num(4)?);
        y_post.push(num(5)?);
        delta_during.push(num(6)?);
        delta_post.push(num(7)?);
        let mut lrow = Vec::with_capacity(nm);
        for j in 0..nm {
            lrow.push(num(fixed + j)?);
        }
        logs.push(lrow);
        if meta.has_counts {
            let mut crow = Vec::with_capacity(nm);
            for j in 0..nm {
                crow.push(num(fixed + nm + j)?);
            }
            counts.push(crow);
        }
    }
    if !ids.windows(2).all(|w| w[0] < w[1]) {
        return Err(parse_err(path, 0, "panel rows must be sorted by unique user_id"));
    }
    Ok(OutcomePanel {
        ids,
        month_cols: meta.month_cols,
        counts: if meta.has_counts { Some(counts) } else { None },
        logs,
        y_pre,
        y_during,
        y_post,
        delta_during,
        delta_post,
        alpha_during: meta.alpha_during,
        alpha_post: meta.alpha_post,
        activity_pre,
        hate_share_pre,
        measure: meta.measure,
        category: meta.category,
        periods: meta.periods,
    })
}

// ------------------------------------------------------------------ rosters

/// Read a plain id list (one per line, blanks skipped), sorted and deduped.
pub fn read_roster(path: &Path) -> Result<Vec<String>> {
    let body = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut ids: Vec<String> =
        body.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::invalid(format!("{} lists no ids", path.display())));
    }
    Ok(ids)
}

/// Write an id list, one per line.
pub fn write_roster(path: &Path, ids: &[String]) -> Result<()> {
    let mut body = String::new();
    for id in ids {
        body.push_str(id);
        body.push('\n');
    }
    atomic_write(path, body.as_bytes())
}

// --------------------------------------------------------------------- grid

/// Parse an inclusive numeric grid `start:step:stop`.
pub fn parse_grid(spec: &str) -> Result<Vec<Real>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::invalid(format!("grid must look like start:step:stop, got {spec:?}")));
    }
    let num = |s: &str| -> Result<Real> {
        s.trim()
            .parse::<Real>()
            .map_err(|_| Error::invalid(format!("grid component {s:?} is not a number")))
    };
    let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    if stop < start {
        return Err(Error::invalid("grid stop must not precede start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 200_000 {
        return Err(Error::invalid(format!("grid has {count} points; refusing more than 200000")));
    }
    Ok((0..count).map(|i| start + step * i as Real).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::assign;
    use crate::outcomes::{build_panel, difference_adjust, PostKind};
    use chrono::Utc;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tmpdir();
        let p = dir.path().join("out.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        let names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["out.txt".to_string()]);
    }

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tmpdir();
        let p = dir.path().join("abc.bin");
        atomic_write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn edges_round_trip_and_parse_errors_carry_lines() {
        let dir = tmpdir();
        let p = dir.path().join("edges.csv");
        let edges = vec![
            ("a".to_string(), "b".to_string(), 2.5),
            ("b".to_string(), "c".to_string(), 0.125),
        ];
        write_edges_csv(&p, &edges).unwrap();
        assert_eq!(read_edges_csv(&p).unwrap(), edges);

        let bad = dir.path().join("bad.csv");
        atomic_write(&bad, b"src,dst,weight\na,b,1.0\na,c,not_a_number\n").unwrap();
        let err = read_edges_csv(&bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("bad.csv:3:"), "{msg}");
    }

    #[test]
    fn clusters_and_assignment_round_trip() {
        let rows: Vec<(String, u64, bool)> = (0..9)
            .map(|i| (format!("u{i}"), (i / 3) as u64, i % 3 == 0))
            .collect();
        let clusters = ClusterAssignment::from_pairs(rows).unwrap();
        let dir = tmpdir();
        let cp = dir.path().join("clusters.csv");
        write_clusters_csv(&cp, &clusters).unwrap();
        let back = read_clusters_csv(&cp).unwrap();
        assert_eq!(back.ids, clusters.ids);
        assert_eq!(back.cluster_of, clusters.cluster_of);
        assert_eq!(back.centroids, clusters.centroids);

        let params = DesignParams::new(0.5, 0.18).unwrap();
        let a = assign(&clusters, &params, 99);
        let ap = dir.path().join("assignment.csv");
        write_assignment_csv(&ap, &a).unwrap();
        assert!(meta_path(&ap).exists());
        let b = read_assignment_csv(&ap).unwrap();
        assert_eq!(b.ids, a.ids);
        assert_eq!(b.z, a.z);
        assert_eq!(b.flips, a.flips);
        assert_eq!(b.cluster_bits, a.cluster_bits);
        assert_eq!(b.seed, a.seed);
        assert_eq!(b.params, a.params);
    }

    #[test]
    fn corrupted_assignment_is_rejected() {
        let clusters = ClusterAssignment::from_pairs(
            (0..4).map(|i| (format!("u{i}"), (i / 2) as u64, false)).collect(),
        )
        .unwrap();
        let a = assign(&clusters, &DesignParams::new(0.5, 0.18).unwrap(), 1);
        let dir = tmpdir();
        let ap = dir.path().join("assignment.csv");
        write_assignment_csv(&ap, &a).unwrap();
        let body = std::fs::read_to_string(&ap).unwrap();
        // flip one treated flag so XOR no longer holds
        let broken = if body.contains(",true\n") {
            body.replacen(",true\n", ",false\n", 1)
        } else {
            body.replacen(",false\n", ",true\n", 1)
        };
        atomic_write(&ap, broken.as_bytes()).unwrap();
        assert!(read_assignment_csv(&ap).is_err());
    }

    #[test]
    fn posts_jsonl_round_trip_with_line_errors() {
        let dir = tmpdir();
        let p = dir.path().join("posts.jsonl");
        let posts = vec![PostEvent {
            user_id: "u1".into(),
            post_id: "p1".into(),
            ts: "2023-01-02T03:04:05Z".parse().unwrap(),
            kind: PostKind::Repost,
            source_user_id: Some("s".into()),
            source_post_id: Some("o".into()),
            hate_score: Some(0.25),
            source_followers: Some(10),
            source_statuses: Some(3),
            text_tokens: Some(vec!["a".into(), "b".into()]),
        }];
        write_posts_jsonl(&p, &posts).unwrap();
        let back = read_posts_jsonl(&p).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].post_id, "p1");
        assert_eq!(back[0].hate_score, Some(0.25));

        let bad = dir.path().join("bad.jsonl");
        atomic_write(&bad, b"{\"user_id\": \"u\"}\n\nnot json\n").unwrap();
        let err = read_posts_jsonl(&bad).unwrap_err();
        assert!(format!("{err}").contains("line 1"));
    }

    #[test]
    fn panel_round_trip_is_bitwise() {
        let periods = PeriodSpec::new(
            ("2023-01-01T00:00:00Z".parse().unwrap(), "2023-03-01T00:00:00Z".parse().unwrap()),
            ("2023-03-01T00:00:00Z".parse().unwrap(), "2023-05-01T00:00:00Z".parse().unwrap()),
            ("2023-05-01T00:00:00Z".parse().unwrap(), "2023-07-01T00:00:00Z".parse().unwrap()),
        )
        .unwrap();
        let mut posts = Vec::new();
        for (i, day) in [(1, 5), (1, 40), (2, 70), (3, 130)] {
            let ts = chrono::DateTime::<Utc>::from_timestamp(
                1672531200 + day * 86400,
                i as u32,
            )
            .unwrap();
            posts.push(PostEvent {
                user_id: format!("u{i}"),
                post_id: format!("p{i}{day}"),
                ts,
                kind: PostKind::Original,
                source_user_id: None,
                source_post_id: None,
                hate_score: Some(0.7 + 0.01 * i as Real),
                source_followers: None,
                source_statuses: None,
                text_tokens: None,
            });
        }
        let mut panel = build_panel(
            &posts,
            &periods,
            &HateMeasure::Threshold { c: 0.5 },
            CategoryFilter::All,
            None,
        )
        .unwrap();
        difference_adjust(&mut panel, AlphaPooling::Pooled, None).unwrap();

        let dir = tmpdir();
        let p = dir.path().join("panel.csv");
        write_panel_csv(&p, &panel).unwrap();
        let back = read_panel_csv(&p).unwrap();
        assert_eq!(back.ids, panel.ids);
        assert_eq!(back.month_cols, panel.month_cols);
        assert_eq!(back.logs, panel.logs);
        assert_eq!(back.counts, panel.counts);
        assert_eq!(back.y_pre, panel.y_pre);
        assert_eq!(back.delta_during, panel.delta_during);
        assert_eq!(back.alpha_during, panel.alpha_during);
    }

    #[test]
    fn roster_files_sort_and_dedupe() {
        let dir = tmpdir();
        let p = dir.path().join("roster.txt");
        atomic_write(&p, b"zed\n\nann\nzed\n").unwrap();
        assert_eq!(read_roster(&p).unwrap(), vec!["ann".to_string(), "zed".into()]);
        write_roster(&p, &["b".to_string(), "a".into()]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b\na\n");
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:0.5:2").unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(parse_grid("-6:2:-2").unwrap(), vec![-6.0, -4.0, -2.0]);
        // stop lands mid-step: last point does not overshoot
        assert_eq!(parse_grid("0:0.4:1").unwrap(), vec![0.0, 0.4, 0.8]);
        assert!(parse_grid("1:0:2").is_err());
        assert!(parse_grid("2:1:1").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }
}
