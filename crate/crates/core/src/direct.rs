//! Direct-effect estimation under the two-stage design.
//!
//! Point estimates are Horvitz–Thompson means of difference-adjusted
//! outcomes, inverse-weighted by the exact design propensities. Variances
//! come in two flavors: the exact design variance (needs both potential
//! outcomes, used by generators and the validation battery) and a
//! conservative observed-data estimator whose arm variances are unbiased
//! and whose arm covariance is biased downward, so the variance of the
//! difference is never understated in expectation.
//!
//! Monthly effects get randomization inference instead of normal theory:
//! the statistic is the assignment slope from a regression with baseline
//! equal-count bins, recomputed over replicate draws of the actual design.
//! Because the statistic is linear in the hypothesized constant shift,
//! replicates are summarized once and a whole null grid is scanned for the
//! inverted confidence interval.

use crate::design::{replicate_z, DesignParams, PropensityTable};
use crate::error::{Error, Result};
use crate::netgraph::ClusterAssignment;
use crate::outcomes::MonthCol;
use crate::regress::{normal_two_sided_p, quantile, symmetric_grid, Bins, GridCi, RiLinear};
use crate::{Real, Z975};
use serde::Serialize;
use std::collections::BTreeMap;

/// Horvitz–Thompson mean of `delta` in arm `t`: `(1/N) Σ_{z_i=t} Δ_i / P(Z=t)`.
pub fn ht_mean(delta: &[Real], z: &[bool], t: bool, marginal: Real) -> Real {
    assert_eq!(delta.len(), z.len());
    let sum: Real = delta.iter().zip(z).filter(|&(_, &zi)| zi == t).map(|(&d, _)| d).sum();
    sum / (marginal * delta.len() as Real)
}

/// Design variance pieces for the pair of arm means.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VarianceComponents {
    pub var_treated: Real,
    pub var_control: Real,
    pub cov: Real,
    /// `var_treated + var_control - 2·cov`.
    pub var_effect: Real,
}

impl VarianceComponents {
    fn close(var_treated: Real, var_control: Real, cov: Real) -> Self {
        VarianceComponents {
            var_treated,
            var_control,
            cov,
            var_effect: var_treated + var_control - 2.0 * cov,
        }
    }
}

/// Exact design variance of the two HT arm means, from both potential
/// outcomes. Cross-cluster assignments are independent, so only
/// within-cluster products and the diagonal enter.
pub fn true_variance(
    delta_treated: &[Real],
    delta_control: &[Real],
    cluster_of: &[u32],
    table: &PropensityTable,
) -> VarianceComponents {
    let n = delta_treated.len();
    assert!(n == delta_control.len() && n == cluster_of.len());
    let nn = (n as Real) * (n as Real);
    let mut sums: BTreeMap<u32, [Real; 2]> = BTreeMap::new();
    let mut q = [0.0; 2]; // Σ Δ_i(t)²
    let mut q10 = 0.0; // Σ Δ_i(1)Δ_i(0)
    for i in 0..n {
        let s = sums.entry(cluster_of[i]).or_insert([0.0; 2]);
        s[1] += delta_treated[i];
        s[0] += delta_control[i];
        q[1] += delta_treated[i] * delta_treated[i];
        q[0] += delta_control[i] * delta_control[i];
        q10 += delta_treated[i] * delta_control[i];
    }
    let (mut s1, mut s0, mut s10) = (0.0, 0.0, 0.0);
    for s in sums.values() {
        s1 += s[1] * s[1];
        s0 += s[0] * s[0];
        s10 += s[1] * s[0];
    }
    let arm = |s: Real, q: Real, p: Real, ptt: Real| -> Real {
        ((ptt / (p * p) - 1.0) * (s - q) + (1.0 / p - 1.0) * q) / nn
    };
    let p1 = table.marginal(true);
    let p0 = table.marginal(false);
    let var_treated = arm(s1, q[1], p1, table.joint(true, true, true));
    let var_control = arm(s0, q[0], p0, table.joint(true, false, false));
    let j10 = table.joint(true, true, false);
    let cov = ((j10 / (p1 * p0) - 1.0) * (s10 - q10) - q10) / nn;
    VarianceComponents::close(var_treated, var_control, cov)
}

/// Conservative variance estimate from one realized assignment.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConservativeVariance {
    /// Raw (possibly negative in small samples) unbiased/conservative pieces.
    pub components: VarianceComponents,
    /// `var_effect` clamped at zero; what standard errors use.
    pub var_effect: Real,
    /// True when clamping fired.
    pub clamped: bool,
}

/// Observed-data variance estimator.
///
/// The arm-variance estimators are exactly unbiased for the design
/// variances; the covariance estimator replaces the unobservable diagonal
/// cross-products with half the sum of squared per-arm outcomes, which
/// biases it downward and therefore the variance of the difference upward.
/// When the same-cluster discordant propensity is zero (no hole punching)
/// its cross-pair term is structurally empty and is skipped.
pub fn conservative_variance(
    delta: &[Real],
    z: &[bool],
    cluster_of: &[u32],
    table: &PropensityTable,
) -> ConservativeVariance {
    let n = delta.len();
    assert!(n == z.len() && n == cluster_of.len());
    let nn = (n as Real) * (n as Real);
    let mut sums: BTreeMap<u32, [Real; 2]> = BTreeMap::new();
    let mut q = [0.0; 2];
    for i in 0..n {
        let a = z[i] as usize;
        sums.entry(cluster_of[i]).or_insert([0.0; 2])[a] += delta[i];
        q[a] += delta[i] * delta[i];
    }
    let (mut s1, mut s0, mut s10) = (0.0, 0.0, 0.0);
    for s in sums.values() {
        s1 += s[1] * s[1];
        s0 += s[0] * s[0];
        s10 += s[1] * s[0];
    }
    let p1 = table.marginal(true);
    let p0 = table.marginal(false);
    let arm = |s: Real, q: Real, p: Real, ptt: Real| -> Real {
        ((1.0 / (p * p) - 1.0 / ptt) * s + (1.0 / ptt - 1.0 / p) * q) / nn
    };
    let var_treated = arm(s1, q[1], p1, table.joint(true, true, true));
    let var_control = arm(s0, q[0], p0, table.joint(true, false, false));
    let j10 = table.joint(true, true, false);
    let cross = if j10 > 0.0 { (1.0 / (p1 * p0) - 1.0 / j10) * s10 } else { 0.0 };
    let cov = (cross - q[1] / (2.0 * p1) - q[0] / (2.0 * p0)) / nn;
    let components = VarianceComponents::close(var_treated, var_control, cov);
    ConservativeVariance {
        components,
        var_effect: components.var_effect.max(0.0),
        clamped: components.var_effect < 0.0,
    }
}

/// Average-effect estimate with design-based uncertainty.
#[derive(Clone, Debug, Serialize)]
pub struct AteEstimate {
    pub mu_treated: Real,
    pub mu_control: Real,
    /// `mu_treated - mu_control` on the log outcome scale.
    pub point: Real,
    pub std_error: Real,
    pub ci_low: Real,
    pub ci_high: Real,
    pub p_value: Real,
    /// `(exp(point) - 1) · 100`.
    pub pct_change: Real,
    pub variance: ConservativeVariance,
    pub n: usize,
    pub n_treated: usize,
}

/// Difference of HT arm means with the conservative variance, normal CI,
/// and percent interpretation of the log-scale point estimate.
pub fn ate_difference(
    delta: &[Real],
    z: &[bool],
    cluster_of: &[u32],
    table: &PropensityTable,
) -> Result<AteEstimate> {
    let n = delta.len();
    if n == 0 {
        return Err(Error::invalid("no observations"));
    }
    if z.len() != n || cluster_of.len() != n {
        return Err(Error::invalid("assignment or clustering misaligned with outcomes"));
    }
    let mu_treated = ht_mean(delta, z, true, table.marginal(true));
    let mu_control = ht_mean(delta, z, false, table.marginal(false));
    let variance = conservative_variance(delta, z, cluster_of, table);
    let point = mu_treated - mu_control;
    let std_error = variance.var_effect.sqrt();
    Ok(AteEstimate {
        mu_treated,
        mu_control,
        point,
        std_error,
        ci_low: point - Z975 * std_error,
        ci_high: point + Z975 * std_error,
        p_value: normal_two_sided_p(point, std_error),
        pct_change: (point.exp() - 1.0) * 100.0,
        variance,
        n,
        n_treated: z.iter().filter(|&&zi| zi).count(),
    })
}

/// Effect estimates in the two halves of a baseline split.
#[derive(Clone, Debug, Serialize)]
pub struct SubgroupAte {
    /// Lower-median split point; values equal to it go low.
    pub threshold: Real,
    pub low: AteEstimate,
    pub high: AteEstimate,
}

/// Split at the (lower) median of `splitter` and estimate each half.
pub fn subgroup_ate(
    delta: &[Real],
    splitter: &[Real],
    z: &[bool],
    cluster_of: &[u32],
    table: &PropensityTable,
) -> Result<SubgroupAte> {
    let n = delta.len();
    if splitter.len() != n {
        return Err(Error::invalid("splitter misaligned with outcomes"));
    }
    let mut sorted = splitter.to_vec();
    sorted.sort_by(Real::total_cmp);
    let threshold = sorted[(n.saturating_sub(1)) / 2];
    let pick = |want_low: bool| -> (Vec<Real>, Vec<bool>, Vec<u32>) {
        let mut d = Vec::new();
        let mut zz = Vec::new();
        let mut cc = Vec::new();
        for i in 0..n {
            if (splitter[i] <= threshold) == want_low {
                d.push(delta[i]);
                zz.push(z[i]);
                cc.push(cluster_of[i]);
            }
        }
        (d, zz, cc)
    };
    let (dl, zl, cl) = pick(true);
    let (dh, zh, ch) = pick(false);
    if dh.is_empty() {
        return Err(Error::invalid("splitter has no variation above its median"));
    }
    Ok(SubgroupAte {
        threshold,
        low: ate_difference(&dl, &zl, &cl, table)?,
        high: ate_difference(&dh, &zh, &ch, table)?,
    })
}

/// Extensive-margin effect: plain difference of 0/1 indicators, no rescale
/// (a ratio adjustment makes no sense for indicators).
pub fn binary_ate(
    pre_flag: &[Real],
    during_flag: &[Real],
    z: &[bool],
    cluster_of: &[u32],
    table: &PropensityTable,
) -> Result<AteEstimate> {
    for v in pre_flag.iter().chain(during_flag) {
        if *v != 0.0 && *v != 1.0 {
            return Err(Error::invalid("binary outcome must be 0/1"));
        }
    }
    if pre_flag.len() != during_flag.len() {
        return Err(Error::invalid("indicator vectors misaligned"));
    }
    let delta: Vec<Real> =
        during_flag.iter().zip(pre_flag).map(|(&d, &p)| d - p).collect();
    let mut est = ate_difference(&delta, z, cluster_of, table)?;
    // the point estimate is already a probability difference; percent-change
    // on the log scale does not apply
    est.pct_change = Real::NAN;
    Ok(est)
}

/// Options for monthly randomization inference.
#[derive(Clone, Copy, Debug)]
pub struct MonthlyRiOptions {
    /// Number of replicate assignments.
    pub replicates: usize,
    /// Equal-count baseline bins (merged down as data allows).
    pub bins: usize,
    /// Test level for the inverted interval.
    pub alpha: Real,
    /// Grid points per inversion pass.
    pub grid_points: usize,
    /// Master seed of the replicate stream.
    pub seed: u64,
}

impl Default for MonthlyRiOptions {
    fn default() -> Self {
        MonthlyRiOptions { replicates: 2000, bins: 40, alpha: 0.05, grid_points: 201, seed: 0 }
    }
}

/// Randomization-inference summary for one month column.
#[derive(Clone, Debug, Serialize)]
pub struct MonthlyRiResult {
    pub col: MonthCol,
    /// Assignment slope with baseline-bin adjustment.
    pub theta: Real,
    /// Point test of the zero-effect sharp null.
    pub p_value: Real,
    pub ci_low: Real,
    pub ci_high: Real,
    /// Grid-inversion diagnostics for the interval above.
    pub ci_empty: bool,
    pub ci_touches_edge: bool,
    pub ci_contiguous: bool,
    /// How many times the null grid had to be widened.
    pub widened: u8,
    pub replicates: usize,
    /// Replicates dropped for lack of residual assignment variation.
    pub degenerate_replicates: usize,
}

/// Replicate summary for the monthly statistic: observed slope plus the
/// `(a_b, c_b)` linear coefficients under constant-shift nulls.
///
/// `y` is the month outcome, `bins` the frozen baseline bins, `z` the
/// realized assignment. Replicates come from the `(seed, "replicate", b)`
/// streams of the same design.
pub fn monthly_ri_linear(
    y: &[Real],
    bins: &Bins,
    z: &[bool],
    clusters: &ClusterAssignment,
    params: &DesignParams,
    seed: u64,
    replicates: usize,
) -> Result<(RiLinear, usize)> {
    let n = y.len();
    if n != z.len() || n != clusters.n() {
        return Err(Error::invalid("outcome, assignment, and clustering misaligned"));
    }
    let z_real: Vec<Real> = z.iter().map(|&b| b as u8 as Real).collect();
    let doses = (0..replicates).map(|b| {
        replicate_z(clusters, params, seed, b as u64)
            .into_iter()
            .map(|v| v as u8 as Real)
            .collect()
    });
    crate::regress::ri_linear_from_doses(y, &z_real, bins, doses)
}

/// Monthly effects with randomization inference, one result per requested
/// panel month column. Baseline bins are frozen from `y_pre` once and reused
/// for every month and replicate.
pub fn monthly_ri(
    months: &[(MonthCol, &[Real])],
    y_pre: &[Real],
    z: &[bool],
    clusters: &ClusterAssignment,
    params: &DesignParams,
    opts: &MonthlyRiOptions,
) -> Result<Vec<MonthlyRiResult>> {
    let bins = Bins::equal_count(y_pre, opts.bins)?;
    let mut out = Vec::with_capacity(months.len());
    for &(col, y) in months {
        let (ri, degenerate) =
            monthly_ri_linear(y, &bins, z, clusters, params, opts.seed, opts.replicates)?;
        let (ci, widened) = invert_with_widening(&ri, opts.alpha, opts.grid_points);
        out.push(MonthlyRiResult {
            col,
            theta: ri.theta_obs,
            p_value: ri.p_point(0.0),
            ci_low: ci.low,
            ci_high: ci.high,
            ci_empty: ci.empty,
            ci_touches_edge: ci.touches_edge,
            ci_contiguous: ci.contiguous,
            widened,
            replicates: ri.n_replicates(),
            degenerate_replicates: degenerate,
        });
    }
    Ok(out)
}

/// Place a null grid from the replicate spread and invert, widening up to
/// three times if the acceptance region is empty or clips the boundary.
///
/// The replicate statistic at null `η` is `a_b + η·c_b` with `c_b ≈ 1`, so
/// acceptance centers near `(θ̂ − median(a)) / median(c)` with width set by
/// the spread of `a_b`.
pub fn invert_with_widening(ri: &RiLinear, alpha: Real, grid_points: usize) -> (GridCi, u8) {
    let med_a = quantile(&ri.a, 0.5);
    let med_c = {
        let m = quantile(&ri.c, 0.5);
        if m.abs() < 1e-3 {
            1e-3_f64.copysign(if m == 0.0 { 1.0 } else { m })
        } else {
            m
        }
    };
    let center = (ri.theta_obs - med_a) / med_c;
    let spread = (quantile(&ri.a, 0.99) - quantile(&ri.a, 0.01)).abs() / med_c.abs();
    let mut half = (4.0 * spread).max(1e-9 + ri.theta_obs.abs() * 1e-6);
    let mut widened = 0u8;
    loop {
        let ci = ri.invert(&symmetric_grid(center, half, grid_points), alpha);
        if (!ci.empty && !ci.touches_edge) || widened >= 3 {
            return (ci, widened);
        }
        half *= 4.0;
        widened += 1;
    }
}

/// Wald rescale of an intention-to-treat estimate by first-stage take-up.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TotWald {
    pub point: Real,
    pub std_error: Real,
    pub pct_change: Real,
    pub takeup: Real,
}

/// Treatment-on-treated effect: ITT point and SE divided by the take-up
/// difference (treating take-up as estimated without error).
pub fn tot_wald(itt_point: Real, itt_se: Real, takeup: Real) -> Result<TotWald> {
    if !(takeup > 0.0) || !takeup.is_finite() {
        return Err(Error::invalid(format!("take-up must be positive, got {takeup}")));
    }
    let point = itt_point / takeup;
    Ok(TotWald {
        point,
        std_error: itt_se / takeup,
        pct_change: (point.exp() - 1.0) * 100.0,
        takeup,
    })
}
