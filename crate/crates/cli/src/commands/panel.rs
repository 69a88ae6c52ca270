//! `netx panel`: post log → per-user monthly outcomes.

use crate::util::{parse_alpha, parse_category, parse_measure, parse_periods, with_cleanup};
use clap::Args;
use netx_core::error::{Error, Result};
use netx_core::io::{read_assignment_csv, read_posts_jsonl, read_roster, write_panel_csv};
use netx_core::outcomes::{build_panel, difference_adjust};
use std::path::PathBuf;

#[derive(Args)]
pub struct PanelArgs {
    /// Post log (JSON lines)
    #[arg(long)]
    pub posts: PathBuf,
    /// Pre period window START..END
    #[arg(long)]
    pub pre: String,
    /// During period window START..END
    #[arg(long)]
    pub during: String,
    /// Post period window START..END
    #[arg(long)]
    pub post: String,
    /// Outcome measure: threshold:<c>, raw_score, or keywords:<w1,w2,...>
    #[arg(long, default_value = "threshold:0.5")]
    pub measure: String,
    /// Post kinds counted: all, original, or repost
    #[arg(long, default_value = "all")]
    pub category: String,
    /// Restrict the panel to these users (one id per line); default is
    /// everyone who posted
    #[arg(long)]
    pub roster: Option<PathBuf>,
    /// Difference adjustment: pooled, control_only, or none
    #[arg(long, default_value = "pooled")]
    pub alpha: String,
    /// Assignment CSV (required for control_only pooling)
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// Output panel CSV (meta sidecar written alongside)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn panel(args: PanelArgs) -> Result<()> {
    let posts = read_posts_jsonl(&args.posts)?;
    let periods = parse_periods(&args.pre, &args.during, &args.post)?;
    let measure = parse_measure(&args.measure)?;
    let category = parse_category(&args.category)?;
    let roster = match &args.roster {
        Some(p) => Some(read_roster(p)?),
        None => None,
    };
    let mut panel = build_panel(&posts, &periods, &measure, category, roster.as_deref())?;

    if let Some(pooling) = parse_alpha(&args.alpha)? {
        let z = match &args.assignment {
            Some(path) => {
                let a = read_assignment_csv(path)?;
                if a.ids != panel.ids {
                    return Err(Error::invalid(
                        "assignment covers a different user set than the panel",
                    ));
                }
                Some(a.z)
            }
            None => None,
        };
        difference_adjust(&mut panel, pooling, z.as_deref())?;
    }

    with_cleanup(|t| {
        t.add_with_meta(&args.out);
        write_panel_csv(&args.out, &panel)
    })?;
    eprintln!(
        "panel: {} users x {} month columns -> {}",
        panel.n(),
        panel.month_cols.len(),
        args.out.display()
    );
    Ok(())
}
