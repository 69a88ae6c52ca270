//! `netx validate`: the self-validation battery.
//!
//! Runs every criterion, prints one line per criterion, optionally writes
//! the machine-readable report, and fails (exit 2) if anything failed.

use crate::util::{with_cleanup, OutputTracker};
use clap::Args;
use netx_core::error::{Error, Result};
use netx_core::io::write_json;
use netx_core::validate::run_battery;
use std::path::PathBuf;

#[derive(Args)]
pub struct ValidateArgs {
    /// Master seed for the battery
    #[arg(long, default_value_t = 1729)]
    pub seed: u64,
    /// Write the full report (JSON) here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let report = run_battery(args.seed);
    for c in &report.criteria {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2}: {status} - {} ({})", c.id, c.name, c.details);
    }
    if let Some(out) = &args.out {
        with_cleanup(|t: &mut OutputTracker| {
            t.add(out);
            write_json(out, &report)
        })?;
    }
    if report.passed {
        println!("all {} criteria passed", report.criteria.len());
        Ok(())
    } else {
        let failed = report.criteria.iter().filter(|c| !c.passed).count();
        Err(Error::invalid(format!(
            "{failed} of {} validation criteria failed",
            report.criteria.len()
        )))
    }
}
