//! Self-validation battery.
//!
//! Eleven checks that the estimation machinery reproduces its own theory:
//! closed forms against enumeration, design-unbiasedness, the variance
//! identity, conservativeness, calibration of the randomization tests,
//! interval coverage on planted effects, estimator equivalences, Monte
//! Carlo agreement, reference conversions, brute-force analytics oracles,
//! and bit-level determinism across worker counts.
//!
//! Every criterion is a pure function of the master seed, returning a
//! [`CriterionOutcome`] whose details string contains measured numbers but
//! never wall-clock information, so reports are byte-stable.

use crate::design::{assign, enumerate_design, propensities, DesignParams, PropensityTable};
use crate::direct::{ate_difference, conservative_variance, ht_mean, monthly_ri_linear, tot_wald, true_variance};
use crate::exposure::{
    classify_exposure, mc_exposure_propensities, Condition, ExposureClassification,
    ExposurePropensities, NeighborhoodExposure,
};
use crate::netgraph::{ClusterAssignment, InteractionGraph};
use crate::outcomes::{PostEvent, PostKind};
use crate::persistence::estimate_persistence;
use crate::regress::Bins;
use crate::rng::{derive, substream};
use crate::simlab::{
    default_periods, gen_outcomes, gen_upstream_scenario, OutcomeSpec, UpstreamSpec,
};
use crate::upstream::{
    exposures_pp, lost_reposters, persistence_ri_linear, ri_confidence_interval,
    upstream_ri_linear, LostReposterRow,
};
use crate::{analytics, Real};
use chrono::{Duration, TimeZone, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Schema identifier embedded in validation reports.
pub const VALIDATION_SCHEMA: &str = "netx/validation/v1";

/// One criterion's verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    /// Measured quantities; no timestamps or timings.
    pub details: String,
}

impl CriterionOutcome {
    fn new(id: u8, name: &str, passed: bool, details: String) -> CriterionOutcome {
        CriterionOutcome { id, name: name.to_string(), passed, details }
    }
}

/// The full battery's verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema: String,
    pub master_seed: u64,
    pub passed: bool,
    pub criteria: Vec<CriterionOutcome>,
}

/// Run criteria 1–10 in order.
pub fn run_criteria(master_seed: u64) -> Vec<CriterionOutcome> {
    vec![
        c01_propensity_closed_forms(master_seed),
        c02_estimator_unbiasedness(master_seed),
        c03_variance_identity(master_seed),
        c04_conservative_inference(master_seed),
        c05_ri_calibration(master_seed),
        c06_interval_coverage(master_seed),
        c07_hajek_equivalence(master_seed),
        c08_mc_propensity_agreement(master_seed),
        c09_wald_conversion(master_seed),
        c10_analytics_oracles(master_seed),
    ]
}

/// Run the whole battery, including the determinism re-runs.
pub fn run_battery(master_seed: u64) -> ValidationReport {
    let mut criteria = run_criteria(master_seed);
    criteria.push(c11_determinism(master_seed, &criteria));
    let passed = criteria.iter().all(|c| c.passed);
    ValidationReport {
        schema: VALIDATION_SCHEMA.to_string(),
        master_seed,
        passed,
        criteria,
    }
}

// ------------------------------------------------------------ shared pieces

fn clusters_of(sizes: &[usize]) -> ClusterAssignment {
    let mut rows = Vec::new();
    let mut uid = 0usize;
    for (c, &s) in sizes.iter().enumerate() {
        for _ in 0..s {
            rows.push((format!("v{uid:04}"), c as u64, false));
            uid += 1;
        }
    }
    ClusterAssignment::from_pairs(rows).expect("well-formed cluster rows")
}

/// Small random instance: cluster sizes plus nonnegative potential outcomes
/// for both arms.
struct SmallInstance {
    clusters: ClusterAssignment,
    params: DesignParams,
    table: PropensityTable,
    delta_treated: Vec<Real>,
    delta_control: Vec<Real>,
}

fn small_instances(master_seed: u64, count: usize) -> Vec<SmallInstance> {
    (0..count)
        .map(|k| {
            let mut rng = substream(master_seed, "validate/instance", k as u64);
            let n_clusters = rng.gen_range(2..=4usize);
            let mut sizes = Vec::with_capacity(n_clusters);
            let mut left = 12usize;
            for c in 0..n_clusters {
                let remaining = n_clusters - c - 1; // keep 1 node per later cluster
                let hi = (left - remaining).min(4).max(1);
                let s = rng.gen_range(1..=hi);
                sizes.push(s);
                left -= s;
            }
            let clusters = clusters_of(&sizes);
            let n = clusters.n();
            let params =
                DesignParams::new(rng.gen_range(0.2..0.8), rng.gen_range(0.0..0.45)).unwrap();
            let table = propensities(&params);
            let delta_treated: Vec<Real> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let delta_control: Vec<Real> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            SmallInstance { clusters, params, table, delta_treated, delta_control }
        })
        .collect()
}

fn realized(inst: &SmallInstance, z: &[bool]) -> Vec<Real> {
    z.iter()
        .enumerate()
        .map(|(i, &zi)| if zi { inst.delta_treated[i] } else { inst.delta_control[i] })
        .collect()
}

fn tau_hat(inst: &SmallInstance, z: &[bool]) -> Real {
    let d = realized(inst, z);
    ht_mean(&d, z, true, inst.table.marginal(true))
        - ht_mean(&d, z, false, inst.table.marginal(false))
}

/// Two-sided Kolmogorov–Smirnov p-value against U(0,1), by the asymptotic
/// Kolmogorov series with the small-sample size correction.
fn ks_uniform_p(p_values: &[Real]) -> Real {
    let n = p_values.len();
    assert!(n > 0);
    let mut sorted = p_values.to_vec();
    sorted.sort_by(Real::total_cmp);
    let nf = n as Real;
    let mut d: Real = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        let lo = u - i as Real / nf;
        let hi = (i + 1) as Real / nf - u;
        d = d.max(lo).max(hi);
    }
    let lambda = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    let mut q = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as Real).powi(2) * lambda * lambda).exp();
        q += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
    }
    q.clamp(0.0, 1.0)
}

// -------------------------------------------------------------- criterion 1

/// Closed-form propensities: pinned values at (0.5, 0.18), then full
/// agreement with enumeration over random parameter draws.
pub fn c01_propensity_closed_forms(master_seed: u64) -> CriterionOutcome {
    let name = "propensity closed forms match enumeration";
    let mut worst: Real = 0.0;

    // pinned design: marginals 0.5, same-cluster joints 0.3524 / 0.1476
    let t = propensities(&DesignParams::new(0.5, 0.18).unwrap());
    for (got, want) in [
        (t.marginal(true), 0.5),
        (t.marginal(false), 0.5),
        (t.joint(true, true, true), 0.3524),
        (t.joint(true, false, false), 0.3524),
        (t.joint(true, true, false), 0.1476),
        (t.joint(true, false, true), 0.1476),
    ] {
        worst = worst.max((got - want).abs());
    }
    let pinned_ok = worst < 1e-12;

    // random designs against enumeration on a 3-cluster instance
    let clusters = clusters_of(&[2, 2, 2]);
    let n = clusters.n();
    let mut rng = substream(master_seed, "validate/c1", 0);
    let mut worst_enum: Real = 0.0;
    for _ in 0..50 {
        let params =
            DesignParams::new(rng.gen_range(0.05..0.95), rng.gen_range(0.0..0.45)).unwrap();
        let table = propensities(&params);
        let dist = enumerate_design(&clusters, &params).unwrap();
        for i in 0..n {
            for t in [true, false] {
                worst_enum =
                    worst_enum.max((dist.exact_marginal(i, t) - table.marginal(t)).abs());
            }
            for j in (i + 1)..n {
                let same = clusters.cluster_of[i] == clusters.cluster_of[j];
                for t1 in [true, false] {
                    for t2 in [true, false] {
                        let got = table.joint(same, t1, t2);
                        worst_enum =
                            worst_enum.max((dist.exact_joint(i, j, t1, t2) - got).abs());
                    }
                }
            }
        }
    }
    let passed = pinned_ok && worst_enum < 1e-12;
    CriterionOutcome::new(
        1,
        name,
        passed,
        format!(
            "pinned-design deviation {:.3e}; worst enumeration deviation {:.3e} over 50 draws",
            worst, worst_enum
        ),
    )
}

// -------------------------------------------------------------- criterion 2

/// The difference estimator's enumeration expectation equals the true
/// average effect on every small instance.
pub fn c02_estimator_unbiasedness(master_seed: u64) -> CriterionOutcome {
    let name = "difference estimator is design-unbiased";
    let mut worst: Real = 0.0;
    for inst in small_instances(master_seed, 20) {
        let dist = enumerate_design(&inst.clusters, &inst.params).unwrap();
        let expected = dist.expect(|z| tau_hat(&inst, z));
        let truth = inst
            .delta_treated
            .iter()
            .zip(&inst.delta_control)
            .map(|(t, c)| t - c)
            .sum::<Real>()
            / inst.clusters.n() as Real;
        worst = worst.max((expected - truth).abs());
    }
    CriterionOutcome::new(
        2,
        name,
        worst < 1e-10,
        format!("worst |E[estimate] − truth| = {worst:.3e} over 20 instances"),
    )
}

// -------------------------------------------------------------- criterion 3

/// The closed-form design variance equals the enumeration variance for both
/// arm means and their difference.
pub fn c03_variance_identity(master_seed: u64) -> CriterionOutcome {
    let name = "variance identity is enumeration-exact";
    let mut worst: Real = 0.0;
    for inst in small_instances(master_seed, 20) {
        let dist = enumerate_design(&inst.clusters, &inst.params).unwrap();
        let truth = true_variance(
            &inst.delta_treated,
            &inst.delta_control,
            &inst.clusters.cluster_of,
            &inst.table,
        );
        let mu = |z: &[bool], t: bool| {
            let d = realized(&inst, z);
            ht_mean(&d, z, t, inst.table.marginal(t))
        };
        worst = worst.max((dist.variance(|z| mu(z, true)) - truth.var_treated).abs());
        worst = worst.max((dist.variance(|z| mu(z, false)) - truth.var_control).abs());
        worst = worst.max((dist.variance(|z| tau_hat(&inst, z)) - truth.var_effect).abs());
    }
    CriterionOutcome::new(
        3,
        name,
        worst < 1e-10,
        format!("worst |enumeration − closed form| = {worst:.3e} over 20 instances"),
    )
}

// -------------------------------------------------------------- criterion 4

/// The variance estimator is exactly unbiased for the arm variances and
/// never optimistic (in expectation) for the difference.
pub fn c04_conservative_inference(master_seed: u64) -> CriterionOutcome {
    let name = "variance estimator is conservative";
    let mut worst_arm: Real = 0.0;
    let mut worst_gap: Real = Real::INFINITY; // min of E[estimate] − truth
    for inst in small_instances(master_seed, 20) {
        let dist = enumerate_design(&inst.clusters, &inst.params).unwrap();
        let truth = true_variance(
            &inst.delta_treated,
            &inst.delta_control,
            &inst.clusters.cluster_of,
            &inst.table,
        );
        let est = |z: &[bool]| {
            let d = realized(&inst, z);
            conservative_variance(&d, z, &inst.clusters.cluster_of, &inst.table)
        };
        let e_t = dist.expect(|z| est(z).components.var_treated);
        let e_c = dist.expect(|z| est(z).components.var_control);
        let e_eff = dist.expect(|z| est(z).components.var_effect);
        worst_arm = worst_arm.max((e_t - truth.var_treated).abs());
        worst_arm = worst_arm.max((e_c - truth.var_control).abs());
        worst_gap = worst_gap.min(e_eff - truth.var_effect);
    }
    let passed = worst_arm < 1e-10 && worst_gap > -1e-10;
    CriterionOutcome::new(
        4,
        name,
        passed,
        format!(
            "worst arm-variance bias {worst_arm:.3e}; smallest conservative margin {worst_gap:.3e}"
        ),
    )
}

// -------------------------------------------------------------- criterion 5

/// Sharp-null p-values from all three randomization procedures are uniform:
/// rejection near 5% at the 5% level, Kolmogorov–Smirnov flat.
pub fn c05_ri_calibration(master_seed: u64) -> CriterionOutcome {
    let name = "randomization tests are calibrated";
    const SEEDS: usize = 500;
    const B: usize = 2000;

    let clusters = clusters_of(&[4; 12]);
    let n = clusters.n();
    let params = DesignParams::new(0.5, 0.18).unwrap();

    // --- monthly statistic at the zero-effect null ----------------------
    let (y, bins) = {
        let mut rng = substream(master_seed, "validate/c5-monthly-data", 0);
        let law = Normal::new(0.0, 1.0).unwrap();
        let y: Vec<Real> = (0..n).map(|_| law.sample(&mut rng)).collect();
        let y_pre: Vec<Real> = (0..n).map(|_| law.sample(&mut rng)).collect();
        (y, Bins::equal_count(&y_pre, 6).unwrap())
    };
    let monthly_p: Vec<Real> = (0..SEEDS)
        .into_par_iter()
        .map(|s| {
            let z = assign(&clusters, &params, derive(master_seed, "validate/c5-monthly-z", s as u64)).z;
            let (ri, _) = monthly_ri_linear(
                &y,
                &bins,
                &z,
                &clusters,
                &params,
                derive(master_seed, "validate/c5-monthly-rep", s as u64),
                B,
            )
            .expect("monthly replicate summary");
            ri.p_point(0.0)
        })
        .collect();

    // --- upstream slope at its true per-pp null -------------------------
    let spec = UpstreamSpec {
        n_upstream: 40,
        roster_min: 6,
        roster_max: 10,
        outside_mean: 4.0,
        tau_pct_per_pp: -3.0,
        ..UpstreamSpec::default()
    };
    let window = default_periods().during;
    let z0 = assign(&clusters, &params, derive(master_seed, "validate/c5-up-z0", 0)).z;
    let scenario = gen_upstream_scenario(&spec, &clusters, &z0, window, master_seed)
        .expect("upstream scenario");
    let rosters = &scenario.rosters;
    let tau = scenario.tau_log_per_pp;
    let activity: Vec<Real> = rosters.source_activity.iter().map(|&v| v as Real).collect();
    let up_bins = Bins::equal_count(&activity, 4).unwrap();
    let baselines = |label: &'static str, s: usize, scale: Real| -> Vec<Real> {
        let mut rng = substream(master_seed, label, s as u64);
        let law = Normal::new(0.0, scale).unwrap();
        (0..rosters.n()).map(|_| law.sample(&mut rng)).collect()
    };
    let upstream_p: Vec<Real> = (0..SEEDS)
        .into_par_iter()
        .map(|s| {
            let z = assign(&clusters, &params, derive(master_seed, "validate/c5-up-z", s as u64)).z;
            let dose = exposures_pp(rosters, &z).unwrap();
            let base = baselines("validate/c5-up-base", s, 0.25);
            let delta: Vec<Real> =
                (0..rosters.n()).map(|u| base[u] + tau * dose[u]).collect();
            let (ri, _) = upstream_ri_linear(
                &delta,
                rosters,
                &up_bins,
                &z,
                &clusters,
                &params,
                derive(master_seed, "validate/c5-up-rep", s as u64),
                B,
            )
            .expect("upstream replicate summary");
            ri.p_point(tau)
        })
        .collect();

    // --- persistence ratio at its true carry-over null -------------------
    let beta = 0.6;
    let persistence_p: Vec<Real> = (0..SEEDS)
        .into_par_iter()
        .map(|s| {
            let z = assign(&clusters, &params, derive(master_seed, "validate/c5-pe-z", s as u64)).z;
            let dose = exposures_pp(rosters, &z).unwrap();
            let base = baselines("validate/c5-pe-base", s, 0.25);
            let delta_post: Vec<Real> =
                (0..rosters.n()).map(|u| base[u] + beta * tau * dose[u]).collect();
            let (ri, _) = persistence_ri_linear(
                &delta_post,
                rosters,
                &up_bins,
                &z,
                &clusters,
                &params,
                tau,
                derive(master_seed, "validate/c5-pe-rep", s as u64),
                B,
            )
            .expect("persistence replicate summary");
            ri.p_point(beta)
        })
        .collect();

    let mut passed = true;
    let mut details = Vec::new();
    for (tag, p) in [
        ("monthly", &monthly_p),
        ("upstream", &upstream_p),
        ("persistence", &persistence_p),
    ] {
        let share = p.iter().filter(|&&v| v <= 0.05).count() as Real / p.len() as Real;
        let ks = ks_uniform_p(p);
        let ok = (0.03..=0.07).contains(&share) && ks > 0.01;
        passed &= ok;
        details.push(format!("{tag}: P(p<=0.05)={share:.4}, KS p={ks:.4}"));
    }
    CriterionOutcome::new(5, name, passed, details.join("; "))
}

// -------------------------------------------------------------- criterion 6

/// Nominal-95% intervals cover planted effects in at least 93% of
/// simulations: the direct effect, the upstream slope, and the carry-over
/// fraction.
pub fn c06_interval_coverage(master_seed: u64) -> CriterionOutcome {
    let name = "planted effects are covered by intervals";
    const SIMS: usize = 300;

    // --- direct effect −0.05 under the conservative-variance interval ----
    let clusters = clusters_of(&[4; 50]);
    let ids = clusters.ids.clone();
    let params = DesignParams::new(0.5, 0.18).unwrap();
    let table = propensities(&params);
    let periods = default_periods();
    let spec = OutcomeSpec {
        tau_direct: -0.05,
        exposure_high_treated: 0.0,
        exposure_high_control: 0.0,
        noise_sigma: 0.05,
        ..OutcomeSpec::default()
    };
    let direct_hits = (0..SIMS)
        .into_par_iter()
        .filter(|&s| {
            let z = assign(&clusters, &params, derive(master_seed, "validate/c6-direct-z", s as u64)).z;
            let panel = gen_outcomes(
                &ids,
                &z,
                None,
                &spec,
                &periods,
                derive(master_seed, "validate/c6-direct-y", s as u64),
            )
            .unwrap();
            let est =
                ate_difference(&panel.delta_during, &z, &clusters.cluster_of, &table).unwrap();
            est.ci_low <= -0.05 && -0.05 <= est.ci_high
        })
        .count();

    // --- upstream slope −3% per pp under the inverted exact test ---------
    let up_spec = UpstreamSpec {
        n_upstream: 40,
        roster_min: 6,
        roster_max: 10,
        outside_mean: 4.0,
        tau_pct_per_pp: -3.0,
        ..UpstreamSpec::default()
    };
    let z0 = assign(&clusters, &params, derive(master_seed, "validate/c6-up-z0", 0)).z;
    let scenario =
        gen_upstream_scenario(&up_spec, &clusters, &z0, periods.during, master_seed).unwrap();
    let rosters = &scenario.rosters;
    let tau = scenario.tau_log_per_pp;
    let activity: Vec<Real> = rosters.source_activity.iter().map(|&v| v as Real).collect();
    let up_bins = Bins::equal_count(&activity, 4).unwrap();
    let grid_pct: Vec<Real> = (0..=100).map(|i| -8.0 + 0.1 * i as Real).collect();
    let upstream_hits = (0..SIMS)
        .into_par_iter()
        .filter(|&s| {
            let z = assign(&clusters, &params, derive(master_seed, "validate/c6-up-z", s as u64)).z;
            let dose = exposures_pp(rosters, &z).unwrap();
            let mut rng = substream(master_seed, "validate/c6-up-base", s as u64);
            let law = Normal::new(0.0, 0.25).unwrap();
            let delta: Vec<Real> = (0..rosters.n())
                .map(|u| law.sample(&mut rng) + tau * dose[u])
                .collect();
            let (ri, _) = upstream_ri_linear(
                &delta,
                rosters,
                &up_bins,
                &z,
                &clusters,
                &params,
                derive(master_seed, "validate/c6-up-rep", s as u64),
                2000,
            )
            .unwrap();
            let ci = ri_confidence_interval(&ri, &grid_pct, 0.05).unwrap();
            !ci.empty && ci.pct_low <= -3.0 && -3.0 <= ci.pct_high
        })
        .count();

    // --- carry-over fraction 0.75 under the cluster-robust interval ------
    let beta_clusters = clusters_of(&[6; 100]);
    let beta_ids = beta_clusters.ids.clone();
    let beta_spec = OutcomeSpec {
        tau_direct: -0.05,
        beta: 0.75,
        noise_sigma: 0.08,
        exposure_high_treated: 0.0,
        exposure_high_control: 0.0,
        ..OutcomeSpec::default()
    };
    let beta_hits = (0..SIMS)
        .into_par_iter()
        .filter(|&s| {
            let z = assign(&beta_clusters, &params, derive(master_seed, "validate/c6-beta-z", s as u64)).z;
            let panel = gen_outcomes(
                &beta_ids,
                &z,
                None,
                &beta_spec,
                &periods,
                derive(master_seed, "validate/c6-beta-y", s as u64),
            )
            .unwrap();
            let est = estimate_persistence(&panel, &beta_clusters.cluster_of, 20).unwrap();
            est.ci_low <= 0.75 && 0.75 <= est.ci_high
        })
        .count();

    let need = (SIMS as Real * 0.93).ceil() as usize;
    let passed = direct_hits >= need && upstream_hits >= need && beta_hits >= need;
    CriterionOutcome::new(
        6,
        name,
        passed,
        format!(
            "coverage out of {SIMS}: direct {direct_hits}, upstream {upstream_hits}, carry-over {beta_hits} (need {need})"
        ),
    )
}

// -------------------------------------------------------------- criterion 7

/// With no covariates, the weighted-regression condition means equal the
/// explicit self-normalized weighted ratios.
pub fn c07_hajek_equivalence(master_seed: u64) -> CriterionOutcome {
    let name = "weighted regression equals the ratio estimator";
    let mut worst: Real = 0.0;
    let replicates = 10_000u64;
    for k in 0..100u64 {
        let mut rng = substream(master_seed, "validate/c7", k);
        let n = rng.gen_range(40..=80usize);
        let mut condition: Vec<Option<Condition>> = Vec::with_capacity(n);
        let mut exposure = Vec::with_capacity(n);
        let mut counts: Vec<[u64; 4]> = Vec::with_capacity(n);
        let mut delta: Vec<Real> = Vec::with_capacity(n);
        for i in 0..n {
            // round-robin guarantees all four conditions appear
            let c = Condition::ALL[i % 4];
            condition.push(Some(c));
            exposure.push(match c {
                Condition::ControlHigh | Condition::TreatedHigh => NeighborhoodExposure::High,
                _ => NeighborhoodExposure::Low,
            });
            let mut row = [0u64; 4];
            for slot in row.iter_mut() {
                *slot = rng.gen_range(500..=9_500);
            }
            counts.push(row);
            delta.push(rng.gen_range(-2.0..2.0));
        }
        let class = ExposureClassification { q: 0.75, exposure, condition: condition.clone() };
        let props = ExposurePropensities { counts, replicates, q: 0.75 };
        let cluster_of: Vec<u32> = (0..n as u32).collect();
        let est = crate::exposure::hajek_estimate(
            &delta,
            None,
            &class,
            &props,
            &cluster_of,
            None,
            &crate::exposure::HajekOptions { trim_threshold: 1e-4, bins: 0 },
        )
        .expect("hajek fit");
        for c in Condition::ALL {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                if condition[i] == Some(c) {
                    let w = 1.0 / props.pi(i, c);
                    num += w * delta[i];
                    den += w;
                }
            }
            worst = worst.max((est.condition_means[c.index()] - num / den).abs());
        }
    }
    CriterionOutcome::new(
        7,
        name,
        worst < 1e-10,
        format!("worst |regression − ratio| = {worst:.3e} over 100 instances"),
    )
}

// -------------------------------------------------------------- criterion 8

/// Monte Carlo condition propensities sit within three binomial standard
/// errors of the enumerated exact values for every user and condition.
pub fn c08_mc_propensity_agreement(master_seed: u64) -> CriterionOutcome {
    let name = "monte carlo propensities match enumeration";
    const B: u64 = 50_000;
    let n = 8usize;
    let edges: Vec<(String, String, Real)> = (0..n - 1)
        .map(|i| (format!("p{i}"), format!("p{}", i + 1), 1.0))
        .collect();
    let graph = InteractionGraph::from_weighted_edges(edges).unwrap();
    let clusters = ClusterAssignment::from_pairs(
        (0..n).map(|i| (format!("p{i}"), (i / 3) as u64, false)).collect(),
    )
    .unwrap();
    let params = DesignParams::new(0.4, 0.2).unwrap();
    let q = 0.7;

    // exact propensities by full enumeration
    let dist = enumerate_design(&clusters, &params).unwrap();
    let mut exact = vec![[0.0; 4]; n];
    dist.for_each(|z, pr| {
        let class = classify_exposure(&graph, z, q).unwrap();
        for i in 0..n {
            if let Some(c) = class.condition[i] {
                exact[i][c.index()] += pr;
            }
        }
    });

    let mc = mc_exposure_propensities(&graph, &clusters, &params, q, B, master_seed).unwrap();
    let mut worst_sigma: Real = 0.0;
    let mut ok = true;
    for i in 0..n {
        for c in Condition::ALL {
            let pi = exact[i][c.index()];
            let err = (mc.pi(i, c) - pi).abs();
            let se = (pi * (1.0 - pi) / B as Real).sqrt();
            if se == 0.0 {
                ok &= err < 1e-12;
            } else {
                ok &= err <= 3.0 * se;
                worst_sigma = worst_sigma.max(err / se);
            }
        }
    }
    CriterionOutcome::new(
        8,
        name,
        ok,
        format!("worst deviation {worst_sigma:.2} MC standard errors over {n} users x 4 conditions"),
    )
}

// -------------------------------------------------------------- criterion 9

/// The Wald take-up rescale reproduces the reference conversion.
pub fn c09_wald_conversion(_master_seed: u64) -> CriterionOutcome {
    let name = "wald rescale matches the reference conversion";
    let tot = tot_wald(-0.025, 0.0, 0.458).expect("valid take-up");
    let err = (tot.point - (-0.0546)).abs();
    CriterionOutcome::new(
        9,
        name,
        err <= 2e-4,
        format!("tot({:.3}, takeup {:.3}) = {:.6}, reference -0.0546, |diff| = {err:.2e}", -0.025, 0.458, tot.point),
    )
}

// ------------------------------------------------------------- criterion 10

fn random_cascade_log(master_seed: u64) -> Vec<PostEvent> {
    let mut rng = substream(master_seed, "validate/c10-cascades", 0);
    let epoch = Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap();
    let mut posts = Vec::new();
    for c in 0..1000u32 {
        let size = rng.gen_range(1..=8usize);
        for k in 0..size {
            posts.push(PostEvent {
                user_id: format!("w{:02}", rng.gen_range(0..20)),
                post_id: format!("r{c:04}-{k}"),
                ts: epoch + Duration::seconds(rng.gen_range(0..86_400)),
                kind: PostKind::Repost,
                source_user_id: Some(format!("s{:02}", rng.gen_range(0..10))),
                source_post_id: Some(format!("orig{c:04}")),
                hate_score: Some(1.0),
                source_followers: None,
                source_statuses: None,
                text_tokens: None,
            });
        }
    }
    posts
}

/// Brute-force ordering oracle: rank every repost by counting pairs.
fn ordering_oracle(posts: &[PostEvent]) -> Vec<(String, usize, Real)> {
    let mut cascades: BTreeMap<&str, Vec<(&PostEvent, &str)>> = BTreeMap::new();
    for p in posts {
        if p.kind != PostKind::Repost {
            continue;
        }
        if let Some(orig) = &p.source_post_id {
            cascades.entry(orig.as_str()).or_default().push((p, p.post_id.as_str()));
        }
    }
    let mut acc: BTreeMap<&str, (usize, Real)> = BTreeMap::new();
    for events in cascades.values_mut() {
        if events.len() < 2 {
            continue;
        }
        events.sort_by(|a, b| (a.0.ts, a.1).cmp(&(b.0.ts, b.1)));
        let m = events.len();
        for (p, pid) in events.iter() {
            // O(n²): rank = how many events sort strictly before this one
            let rank = events
                .iter()
                .filter(|(q, qid)| (q.ts, *qid) < (p.ts, *pid))
                .count();
            let slot = acc.entry(p.user_id.as_str()).or_insert((0, 0.0));
            slot.0 += 1;
            slot.1 += rank as Real / (m - 1) as Real;
        }
    }
    acc.into_iter()
        .map(|(u, (k, sum))| (u.to_string(), k, sum / k as Real))
        .collect()
}

fn renewal_fixture() -> (Vec<PostEvent>, Real) {
    let ts = |m: u32, d: u32| Utc.with_ymd_and_hms(2023, m, d, 12, 0, 0).unwrap();
    let repost = |user: &str, src: &str, m: u32, d: u32, pid: &str| PostEvent {
        user_id: user.into(),
        post_id: pid.into(),
        ts: ts(m, d),
        kind: PostKind::Repost,
        source_user_id: Some(src.into()),
        source_post_id: Some(format!("o-{pid}")),
        hate_score: Some(1.0),
        source_followers: None,
        source_statuses: None,
        text_tokens: None,
    };
    // user a: March core {x} (3 of 4 reposts), April core {z} -> renewal 1;
    // user b: March core {x}, April core {x} -> renewal 0. Mean 0.5.
    let posts = vec![
        repost("a", "x", 3, 1, "a1"),
        repost("a", "x", 3, 2, "a2"),
        repost("a", "x", 3, 3, "a3"),
        repost("a", "y", 3, 4, "a4"),
        repost("a", "z", 4, 1, "a5"),
        repost("a", "z", 4, 2, "a6"),
        repost("b", "x", 3, 5, "b1"),
        repost("b", "x", 3, 6, "b2"),
        repost("b", "x", 4, 3, "b3"),
        repost("b", "x", 4, 4, "b4"),
    ];
    (posts, 0.5)
}

/// Set-difference oracle for audience attrition.
fn lost_oracle(
    posts: &[PostEvent],
    upstream_ids: &[String],
    participant_ids: &[String],
    z: &[bool],
    pre: (chrono::DateTime<Utc>, chrono::DateTime<Utc>),
    later: (chrono::DateTime<Utc>, chrono::DateTime<Utc>),
) -> Vec<LostReposterRow> {
    let reposters = |u: &str, w: (chrono::DateTime<Utc>, chrono::DateTime<Utc>)| -> BTreeSet<&str> {
        posts
            .iter()
            .filter(|p| {
                p.kind == PostKind::Repost
                    && p.source_user_id.as_deref() == Some(u)
                    && p.ts >= w.0
                    && p.ts < w.1
            })
            .map(|p| p.user_id.as_str())
            .collect()
    };
    upstream_ids
        .iter()
        .map(|u| {
            let before = reposters(u, pre);
            let after = reposters(u, later);
            let lost: BTreeSet<&str> = before.difference(&after).copied().collect();
            let group = |id: &str| -> usize {
                match participant_ids.binary_search_by(|x| x.as_str().cmp(id)) {
                    Ok(i) if z[i] => 0,
                    Ok(_) => 1,
                    Err(_) => 2,
                }
            };
            let count = |set: &BTreeSet<&str>, g: usize| set.iter().filter(|id| group(id) == g).count();
            LostReposterRow {
                upstream_id: u.clone(),
                treated_pre: count(&before, 0),
                control_pre: count(&before, 1),
                outside_pre: count(&before, 2),
                treated_lost: count(&lost, 0),
                control_lost: count(&lost, 1),
                outside_lost: count(&lost, 2),
            }
        })
        .collect()
}

/// Ordering, renewal, and attrition analytics against independent oracles.
pub fn c10_analytics_oracles(master_seed: u64) -> CriterionOutcome {
    let name = "behavioral analytics match brute-force oracles";
    let mut problems = Vec::new();

    // ordering vs O(n²) rank counting on 1000 random cascades
    let posts = random_cascade_log(master_seed);
    let fast = analytics::ordering_statistic(&posts);
    let slow = ordering_oracle(&posts);
    if fast.len() != slow.len() {
        problems.push("ordering: user sets differ".to_string());
    } else {
        for (f, (u, k, mean)) in fast.iter().zip(&slow) {
            if f.user_id != *u || f.n_reposts != *k || f.mean_position != *mean {
                problems.push(format!("ordering: mismatch for {}", f.user_id));
                break;
            }
        }
    }

    // renewal on the hand fixture
    let (fix_posts, want) = renewal_fixture();
    match analytics::renewal_rate(&fix_posts, 0.75, 2, None) {
        Ok(points) if points.len() == 1 => {
            if (points[0].mean - want).abs() > 0.0 {
                problems.push(format!("renewal: mean {} != {want}", points[0].mean));
            }
            if points[0].n_users != 2 {
                problems.push(format!("renewal: {} users != 2", points[0].n_users));
            }
        }
        Ok(points) => problems.push(format!("renewal: {} month pairs != 1", points.len())),
        Err(e) => problems.push(format!("renewal: {e}")),
    }

    // attrition vs the set-difference oracle on random logs
    let pre = (
        Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(),
        Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap(),
    );
    let later = (
        Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap(),
        Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap(),
    );
    let participant_ids: Vec<String> = (0..12).map(|i| format!("w{i:02}")).collect();
    let upstream_ids: Vec<String> = (0..5).map(|i| format!("s{i:02}")).collect();
    for k in 0..50u64 {
        let mut rng = substream(master_seed, "validate/c10-lost", k);
        let z: Vec<bool> = (0..12).map(|_| rng.gen_bool(0.5)).collect();
        let mut posts = Vec::new();
        for e in 0..rng.gen_range(30..80) {
            let window = if rng.gen_bool(0.5) { pre } else { later };
            let span = (window.1 - window.0).num_seconds();
            posts.push(PostEvent {
                user_id: if rng.gen_bool(0.8) {
                    format!("w{:02}", rng.gen_range(0..12))
                } else {
                    format!("ext{:02}", rng.gen_range(0..6))
                },
                post_id: format!("e{k}-{e}"),
                ts: window.0 + Duration::seconds(rng.gen_range(0..span)),
                kind: PostKind::Repost,
                source_user_id: Some(format!("s{:02}", rng.gen_range(0..5))),
                source_post_id: Some(format!("o{k}-{e}")),
                hate_score: Some(1.0),
                source_followers: None,
                source_statuses: None,
                text_tokens: None,
            });
        }
        let got =
            lost_reposters(&posts, &upstream_ids, &participant_ids, &z, pre, later, None)
                .expect("attrition rows");
        let want = lost_oracle(&posts, &upstream_ids, &participant_ids, &z, pre, later);
        if format!("{got:?}") != format!("{want:?}") {
            problems.push(format!("attrition: mismatch on instance {k}"));
            break;
        }
    }

    let passed = problems.is_empty();
    let details = if passed {
        "ordering (1000 cascades), renewal fixture, attrition (50 logs) all exact".to_string()
    } else {
        problems.join("; ")
    };
    CriterionOutcome::new(10, name, passed, details)
}

// ------------------------------------------------------------- criterion 11

/// Criteria 1–10 serialize byte-identically when re-run, and under
/// single-worker and multi-worker thread pools.
pub fn c11_determinism(master_seed: u64, first_pass: &[CriterionOutcome]) -> CriterionOutcome {
    let name = "battery is deterministic across workers";
    let reference = serde_json::to_string(first_pass).expect("serializable outcomes");
    let mut passed = true;
    let mut notes = Vec::new();
    for workers in [1usize, 3] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        let rerun = pool.install(|| run_criteria(master_seed));
        let bytes = serde_json::to_string(&rerun).expect("serializable outcomes");
        let same = bytes == reference;
        passed &= same;
        notes.push(format!(
            "{workers} worker{}: {}",
            if workers == 1 { "" } else { "s" },
            if same { "identical" } else { "DIVERGED" }
        ));
    }
    CriterionOutcome::new(11, name, passed, notes.join("; "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_accepts_uniform_and_rejects_shifted_samples() {
        let uniform: Vec<Real> = (0..500).map(|i| (i as Real + 0.5) / 500.0).collect();
        assert!(ks_uniform_p(&uniform) > 0.99);
        let shifted: Vec<Real> = (0..500).map(|i| ((i as Real + 0.5) / 500.0).powi(3)).collect();
        assert!(ks_uniform_p(&shifted) < 1e-6);
    }

    #[test]
    fn small_instances_respect_their_size_bounds() {
        for inst in small_instances(7, 20) {
            let n = inst.clusters.n();
            assert!((2..=12).contains(&n));
            assert!(inst.clusters.n_clusters() <= 4);
            assert!(inst.delta_treated.iter().all(|&d| d >= 0.0));
        }
    }

    #[test]
    fn quick_criteria_pass_and_serialize_to_schema() {
        let outcomes = vec![c01_propensity_closed_forms(3), c09_wald_conversion(3)];
        assert!(outcomes.iter().all(|c| c.passed), "{outcomes:#?}");
        let report = ValidationReport {
            schema: VALIDATION_SCHEMA.to_string(),
            master_seed: 3,
            passed: true,
            criteria: outcomes,
        };
        let doc = serde_json::to_value(&report).unwrap();
        let path = format!(
            "{}/../../schemas/validation.schema.json",
            env!("CARGO_MANIFEST_DIR")
        );
        let schema_doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        let compiled = jsonschema::JSONSchema::compile(&schema_doc).unwrap();
        assert!(compiled.is_valid(&doc));
    }

    #[test]
    fn wald_conversion_is_pinned() {
        let c = c09_wald_conversion(0);
        assert!(c.passed, "{}", c.details);
    }
}
