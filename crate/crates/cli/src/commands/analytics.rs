//! `netx analytics`: repost-behavior descriptives over a post log.

use crate::util::{hash_input, parse_measure, parse_periods, parse_window, with_cleanup};
use clap::{Args, Subcommand};
use netx_core::analytics::{composition_outcomes, ordering_statistic, placebo_periods, renewal_rate};
use netx_core::error::Result;
use netx_core::io::{atomic_write, read_posts_jsonl, read_roster, write_json};
use netx_core::report::{EstimateReport, Provenance, ReportBundle};
use netx_core::Real;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Subcommand)]
pub enum AnalyticsCmd {
    /// Month-over-month turnover of each user's core repost sources
    Renewal(RenewalArgs),
    /// How early in a cascade each user tends to repost
    Ordering(OrderingArgs),
    /// Follower-per-post profile of the sources users repost
    Composition(CompositionArgs),
    /// Shift the analysis periods back for a placebo run
    Placebo(PlaceboArgs),
}

#[derive(Args)]
pub struct RenewalArgs {
    /// Post log (JSON lines)
    #[arg(long)]
    pub posts: PathBuf,
    /// Core-set coverage fraction
    #[arg(long, default_value_t = 0.75)]
    pub q: Real,
    /// Minimum qualifying reposts per month to count a user
    #[arg(long, default_value_t = 2)]
    pub min_reposts: usize,
    /// Restrict to qualifying content: threshold:<c>, raw_score, keywords:<...>
    #[arg(long)]
    pub measure: Option<String>,
    /// Output report JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct OrderingArgs {
    /// Post log (JSON lines)
    #[arg(long)]
    pub posts: PathBuf,
    /// Output CSV (user_id,n_reposts,mean_position)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompositionArgs {
    /// Post log (JSON lines)
    #[arg(long)]
    pub posts: PathBuf,
    /// Users to profile (one id per line)
    #[arg(long)]
    pub roster: PathBuf,
    /// Analysis window START..END
    #[arg(long)]
    pub window: String,
    /// Output CSV (user_id,mean_log_ratio,n_events); meta sidecar carries
    /// the exclusion tally
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PlaceboArgs {
    /// Real pre period START..END
    #[arg(long)]
    pub pre: String,
    /// Real during period START..END
    #[arg(long)]
    pub during: String,
    /// Real post period START..END
    #[arg(long)]
    pub post: String,
    /// Whole months to shift back
    #[arg(long)]
    pub shift_months: u32,
    /// Write the shifted windows here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn analytics(cmd: AnalyticsCmd) -> Result<()> {
    match cmd {
        AnalyticsCmd::Renewal(a) => renewal(a),
        AnalyticsCmd::Ordering(a) => ordering(a),
        AnalyticsCmd::Composition(a) => composition(a),
        AnalyticsCmd::Placebo(a) => placebo(a),
    }
}

fn renewal(args: RenewalArgs) -> Result<()> {
    let posts = read_posts_jsonl(&args.posts)?;
    let measure = args.measure.as_deref().map(parse_measure).transpose()?;
    let points = renewal_rate(&posts, args.q, args.min_reposts, measure.as_ref())?;

    let mut prov = Provenance::new("analytics renewal", None)
        .param("q", args.q)
        .param("min_reposts", args.min_reposts);
    if let Some(m) = &measure {
        prov = prov.param("measure", serde_json::to_value(m).expect("serializable measure"));
    }
    hash_input(&mut prov, &args.posts)?;

    let rows: Vec<EstimateReport> = points.iter().map(EstimateReport::from_renewal).collect();
    let n = rows.len();
    let bundle = ReportBundle::new(prov, rows);
    with_cleanup(|t| {
        t.add(&args.out);
        write_json(&args.out, &bundle)
    })?;
    eprintln!("renewal: {} month pairs -> {}", n, args.out.display());
    Ok(())
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

fn ordering(args: OrderingArgs) -> Result<()> {
    let posts = read_posts_jsonl(&args.posts)?;
    let stats = ordering_statistic(&posts);
    let n = stats.len();
    with_cleanup(|t| {
        t.add(&args.out);
        write_csv(
            &args.out,
            "user_id,n_reposts,mean_position",
            stats
                .iter()
                .map(|s| format!("{},{},{}", s.user_id, s.n_reposts, s.mean_position)),
        )
    })?;
    eprintln!("ordering: {} users -> {}", n, args.out.display());
    Ok(())
}

fn composition(args: CompositionArgs) -> Result<()> {
    let posts = read_posts_jsonl(&args.posts)?;
    let roster = read_roster(&args.roster)?;
    let window = parse_window(&args.window)?;
    let out = composition_outcomes(&posts, &roster, window)?;
    with_cleanup(|t| {
        t.add_with_meta(&args.out);
        write_csv(
            &args.out,
            "user_id,mean_log_ratio,n_events",
            (0..out.ids.len()).map(|i| {
                let v = out.mean_log_ratio[i];
                let shown = if v.is_finite() { v.to_string() } else { String::new() };
                format!("{},{},{}", out.ids[i], shown, out.n_events[i])
            }),
        )?;
        write_json(
            &netx_core::io::meta_path(&args.out),
            &json!({
                "n_users": out.ids.len(),
                "excluded_events": out.excluded_events,
                "window": args.window,
            }),
        )
    })?;
    eprintln!(
        "composition: {} users, {} events excluded -> {}",
        out.ids.len(),
        out.excluded_events,
        args.out.display()
    );
    Ok(())
}

fn placebo(args: PlaceboArgs) -> Result<()> {
    let real = parse_periods(&args.pre, &args.during, &args.post)?;
    let shifted = placebo_periods(&real, args.shift_months)?;
    let fmt = |(s, e): (chrono::DateTime<chrono::Utc>, chrono::DateTime<chrono::Utc>)| {
        json!([s.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
               e.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)])
    };
    let doc = json!({
        "shift_months": args.shift_months,
        "pre": fmt(shifted.pre),
        "during": fmt(shifted.during),
        "post": fmt(shifted.post),
    });
    match &args.out {
        Some(path) => with_cleanup(|t| {
            t.add(path);
            write_json(path, &doc)
        }),
        None => {
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable windows"));
            Ok(())
        }
    }
}
