//! Report types written by the command-line tools.
//!
//! Every artifact embeds full provenance — the command, the master seed,
//! every parameter value, and SHA-256 hashes of the inputs — so a report
//! can always be traced back to a reproducible invocation. Maps are
//! `BTreeMap` and no timestamps are recorded, keeping serialization
//! byte-stable across runs.
//!
//! The JSON layouts are pinned by the schema documents under `schemas/` at
//! the repository root; tests validate emitted instances against them.

use crate::analytics::RenewalPoint;
use crate::direct::{AteEstimate, MonthlyRiResult, TotWald};
use crate::exposure::{Condition, ContrastEstimate, ExposureEstimate};
use crate::persistence::PersistenceEstimate;
use crate::upstream::{PersistenceCi, UpstreamCi};
use crate::Real;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

/// Schema identifier embedded in every report bundle.
pub const REPORT_SCHEMA: &str = "netx/report/v1";
/// Schema identifier embedded in every run manifest.
pub const MANIFEST_SCHEMA: &str = "netx/manifest/v1";

/// How a result came to be: command, seed, parameters, input hashes.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// The subcommand that produced the artifact.
    pub command: String,
    pub master_seed: Option<u64>,
    /// Every parameter the command ran with.
    pub params: BTreeMap<String, Value>,
    /// Input path → hex SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &str, master_seed: Option<u64>) -> Provenance {
        Provenance { command: command.to_string(), master_seed, ..Provenance::default() }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Provenance {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).expect("parameter serializes"),
        );
        self
    }
}

/// One estimate row: what was estimated, how, and with what uncertainty.
///
/// Non-finite values serialize as `null`; fields that do not apply to a
/// method stay `None`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimand: String,
    pub method: String,
    pub point: Option<Real>,
    pub std_error: Option<Real>,
    pub ci_low: Option<Real>,
    pub ci_high: Option<Real>,
    pub ci_level: Real,
    pub p_value: Option<Real>,
    /// Percent interpretation of a log-scale point estimate.
    pub pct_change: Option<Real>,
    pub n: usize,
    /// Method-specific diagnostics (replicate counts, trim tallies, …).
    pub extra: BTreeMap<String, Value>,
}

/// `None` for anything that would not survive JSON (NaN, ±inf).
fn finite(v: Real) -> Option<Real> {
    v.is_finite().then_some(v)
}

fn extra_of(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

impl EstimateReport {
    fn base(estimand: &str, method: &str, n: usize) -> EstimateReport {
        EstimateReport {
            estimand: estimand.to_string(),
            method: method.to_string(),
            point: None,
            std_error: None,
            ci_low: None,
            ci_high: None,
            ci_level: 0.95,
            p_value: None,
            pct_change: None,
            n,
            extra: BTreeMap::new(),
        }
    }

    pub fn from_ate(estimand: &str, est: &AteEstimate) -> EstimateReport {
        let mut r = Self::base(estimand, "ht_difference_conservative", est.n);
        r.point = finite(est.point);
        r.std_error = finite(est.std_error);
        r.ci_low = finite(est.ci_low);
        r.ci_high = finite(est.ci_high);
        r.p_value = finite(est.p_value);
        r.pct_change = finite(est.pct_change);
        r.extra = extra_of(&[
            ("mu_treated", est.mu_treated.into()),
            ("mu_control", est.mu_control.into()),
            ("n_treated", est.n_treated.into()),
            ("variance_clamped", est.variance.clamped.into()),
        ]);
        r
    }

    pub fn from_monthly_ri(res: &MonthlyRiResult, n: usize) -> EstimateReport {
        let estimand = format!("monthly:{:?}_{}", res.col.period, res.col.month).to_lowercase();
        let mut r = Self::base(&estimand, "ri_linear_inversion", n);
        r.point = finite(res.theta);
        r.ci_low = finite(res.ci_low);
        r.ci_high = finite(res.ci_high);
        r.p_value = finite(res.p_value);
        r.extra = extra_of(&[
            ("replicates", res.replicates.into()),
            ("degenerate_replicates", res.degenerate_replicates.into()),
            ("ci_empty", res.ci_empty.into()),
            ("ci_touches_edge", res.ci_touches_edge.into()),
            ("ci_contiguous", res.ci_contiguous.into()),
            ("grid_widened", res.widened.into()),
        ]);
        r
    }

    pub fn from_contrast(c: &ContrastEstimate, n_used: usize) -> EstimateReport {
        let estimand = format!("exposure:{}_vs_{}", cond_tag(c.condition), cond_tag(c.baseline));
        let mut r = Self::base(&estimand, "hajek_ipw_wls", n_used);
        r.point = finite(c.point);
        r.std_error = finite(c.std_error);
        r.ci_low = finite(c.ci_low);
        r.ci_high = finite(c.ci_high);
        r.p_value = finite(c.p_value);
        r.pct_change = finite(c.pct_change);
        r
    }

    pub fn from_persistence(est: &PersistenceEstimate) -> EstimateReport {
        let mut r = Self::base("persistence_beta", "delta_on_delta_cr1", est.n);
        r.point = finite(est.beta);
        r.std_error = finite(est.std_error);
        r.ci_low = finite(est.ci_low);
        r.ci_high = finite(est.ci_high);
        r.p_value = finite(est.p_value);
        r.extra = extra_of(&[
            ("n_clusters", est.n_clusters.into()),
            ("bins_used", est.bins_used.into()),
        ]);
        r
    }

    pub fn from_tot(tot: &TotWald, n: usize) -> EstimateReport {
        let mut r = Self::base("tot_wald", "wald_rescale", n);
        r.point = finite(tot.point);
        r.std_error = finite(tot.std_error);
        r.pct_change = finite(tot.pct_change);
        r.extra = extra_of(&[("takeup", tot.takeup.into())]);
        r
    }

    pub fn from_upstream_ci(
        theta_log_per_pp: Real,
        p_at_zero: Real,
        ci: &UpstreamCi,
        n: usize,
        replicates: usize,
        degenerate: usize,
    ) -> EstimateReport {
        let mut r = Self::base("upstream_effect_per_pp", "ri_linear_inversion", n);
        r.point = finite(theta_log_per_pp);
        r.p_value = finite(p_at_zero);
        r.ci_low = finite(ci.log_low);
        r.ci_high = finite(ci.log_high);
        r.pct_change = finite((theta_log_per_pp.exp() - 1.0) * 100.0);
        r.extra = extra_of(&[
            ("pct_low", ci.pct_low.into()),
            ("pct_high", ci.pct_high.into()),
            ("grid_pct_min", ci.grid_pct[0].into()),
            ("grid_pct_max", (*ci.grid_pct.last().expect("grid validated non-empty")).into()),
            ("ci_empty", ci.empty.into()),
            ("ci_touches_edge", ci.touches_edge.into()),
            ("ci_contiguous", ci.contiguous.into()),
            ("replicates", replicates.into()),
            ("degenerate_replicates", degenerate.into()),
        ]);
        r
    }

    pub fn from_persistence_ci(
        beta_hat: Real,
        ci: &PersistenceCi,
        n: usize,
        replicates: usize,
    ) -> EstimateReport {
        let mut r = Self::base("upstream_persistence_beta", "ri_linear_inversion", n);
        r.point = finite(beta_hat);
        r.ci_low = finite(ci.beta_low);
        r.ci_high = finite(ci.beta_high);
        r.extra = extra_of(&[
            ("conditioning_tau_log_per_pp", ci.tau.into()),
            ("p_at_beta_one", ci.p_at_one.into()),
            ("p_at_beta_zero", ci.p_at_zero.into()),
            ("ci_empty", ci.empty.into()),
            ("ci_touches_edge", ci.touches_edge.into()),
            ("ci_contiguous", ci.contiguous.into()),
            ("replicates", replicates.into()),
        ]);
        r
    }

    pub fn from_renewal(pt: &RenewalPoint) -> EstimateReport {
        let estimand = format!("renewal:{}->{}", pt.from, pt.to);
        let mut r = Self::base(&estimand, "pairwise_core_turnover", pt.n_users);
        r.point = finite(pt.mean);
        r.std_error = finite(pt.std_error);
        r.ci_low = finite(pt.ci_low);
        r.ci_high = finite(pt.ci_high);
        r
    }
}

fn cond_tag(c: Condition) -> &'static str {
    match c {
        Condition::ControlLow => "control_low",
        Condition::ControlHigh => "control_high",
        Condition::TreatedLow => "treated_low",
        Condition::TreatedHigh => "treated_high",
    }
}

/// Flatten an exposure fit into report rows: one per adjusted condition
/// mean, one per contrast.
pub fn exposure_reports(est: &ExposureEstimate) -> Vec<EstimateReport> {
    let mut rows = Vec::with_capacity(4 + est.contrasts.len());
    for c in Condition::ALL {
        let mut r = EstimateReport::base(
            &format!("exposure_mean:{}", cond_tag(c)),
            "hajek_ipw_wls",
            est.n_per_condition[c.index()],
        );
        r.point = finite(est.condition_means[c.index()]);
        r.std_error = finite(est.std_errors[c.index()]);
        r.extra = extra_of(&[
            ("n_used", est.n_used.into()),
            ("trimmed", est.trimmed.into()),
            ("zero_propensity", est.zero_propensity.into()),
            ("unclassified", est.unclassified.into()),
            ("bins_used", est.bins_used.into()),
        ]);
        rows.push(r);
    }
    for c in &est.contrasts {
        rows.push(EstimateReport::from_contrast(c, est.n_used));
    }
    rows
}

/// A report file: provenance plus estimate rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema: String,
    pub provenance: Provenance,
    pub estimates: Vec<EstimateReport>,
}

impl ReportBundle {
    pub fn new(provenance: Provenance, estimates: Vec<EstimateReport>) -> ReportBundle {
        ReportBundle { schema: REPORT_SCHEMA.to_string(), provenance, estimates }
    }
}

/// Top-level record of a run: inputs, outputs, and their hashes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub master_seed: Option<u64>,
    pub params: BTreeMap<String, Value>,
    /// Input path → hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output path → hex SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(provenance: &Provenance) -> RunManifest {
        RunManifest {
            schema: MANIFEST_SCHEMA.to_string(),
            tool: "netx".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: provenance.command.clone(),
            master_seed: provenance.master_seed,
            params: provenance.params.clone(),
            inputs: provenance.inputs.clone(),
            outputs: BTreeMap::new(),
        }
    }

    /// Hash a produced file into the manifest.
    pub fn record_output(&mut self, path: &std::path::Path) -> crate::error::Result<()> {
        self.outputs
            .insert(path.display().to_string(), crate::io::sha256_file(path)?);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{propensities, DesignParams};
    use crate::direct::ate_difference;
    use jsonschema::JSONSchema;

    fn schema(name: &str) -> JSONSchema {
        let path = format!("{}/../../schemas/{name}", env!("CARGO_MANIFEST_DIR"));
        let doc: Value =
            serde_json::from_str(&std::fs::read_to_string(&path).expect("schema file")).unwrap();
        JSONSchema::compile(&doc).expect("schema compiles")
    }

    fn sample_bundle() -> ReportBundle {
        let delta = [0.4, -0.2, 0.1, 0.0, 0.3, -0.1];
        let z = [true, false, true, false, true, false];
        let cluster_of = [0, 0, 1, 1, 2, 2];
        let table = propensities(&DesignParams::new(0.5, 0.18).unwrap());
        let est = ate_difference(&delta, &z, &cluster_of, &table).unwrap();
        let prov = Provenance::new("estimate-direct", Some(7))
            .param("p_t", 0.5)
            .param("p_hp", 0.18);
        ReportBundle::new(prov, vec![EstimateReport::from_ate("ate", &est)])
    }

    #[test]
    fn bundle_validates_against_published_schema() {
        let bundle = sample_bundle();
        let doc = serde_json::to_value(&bundle).unwrap();
        let schema = schema("report.schema.json");
        assert!(schema.is_valid(&doc), "{:#?}", schema.validate(&doc).err().map(|e| {
            e.map(|v| v.to_string()).collect::<Vec<_>>()
        }));
    }

    #[test]
    fn schema_rejects_missing_fields_and_unknown_keys() {
        let schema = schema("report.schema.json");
        let mut doc = serde_json::to_value(sample_bundle()).unwrap();
        doc.as_object_mut().unwrap().remove("provenance");
        assert!(!schema.is_valid(&doc));

        let mut doc2 = serde_json::to_value(sample_bundle()).unwrap();
        doc2.as_object_mut().unwrap().insert("elapsed_seconds".into(), 1.5.into());
        assert!(!schema.is_valid(&doc2), "timestamps and timings must not creep in");
    }

    #[test]
    fn manifest_validates_and_serializes_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        crate::io::atomic_write(&input, b"src,dst,weight\na,b,1\n").unwrap();
        let mut prov = Provenance::new("cluster", Some(11)).param("seed", 11);
        prov.inputs.insert(
            input.display().to_string(),
            crate::io::sha256_file(&input).unwrap(),
        );
        let mut manifest = RunManifest::new(&prov);
        manifest.record_output(&input).unwrap();

        let doc = serde_json::to_value(&manifest).unwrap();
        assert!(schema("manifest.schema.json").is_valid(&doc));
        let a = serde_json::to_string_pretty(&manifest).unwrap();
        let b = serde_json::to_string_pretty(&manifest).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("time"), "manifests must not embed timestamps");
    }

    #[test]
    fn nan_fields_become_null_not_numbers() {
        let mut r = EstimateReport::base("x", "m", 3);
        r.point = finite(Real::NAN);
        r.pct_change = finite(Real::INFINITY);
        let doc = serde_json::to_value(&r).unwrap();
        assert!(doc["point"].is_null());
        assert!(doc["pct_change"].is_null());
    }
}
