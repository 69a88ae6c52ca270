//! Regression plumbing shared by the estimators: equal-count binning for
//! baseline-activity fixed effects, within-bin demeaning (the fast path for
//! randomization-inference replicates), and dependence-aware sandwich
//! variances (cluster-robust and network-HAC).

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::Real;

/// Equal-count bin assignment over a baseline variable.
///
/// Ties never straddle a bin boundary, and bins that end up with fewer than
/// two members are merged upward (toward higher values); `merged` records
/// how many merges happened so callers can report them.
#[derive(Clone, Debug)]
pub struct Bins {
    /// Bin index per observation, in `0..k`.
    pub group: Vec<u32>,
    /// Number of bins actually used.
    pub k: usize,
    /// Number of upward merges applied to honor the two-member minimum.
    pub merged: usize,
}

impl Bins {
    /// Cut `values` into (at most) `k` equal-count bins.
    pub fn equal_count(values: &[Real], k: usize) -> Result<Bins> {
        if values.is_empty() {
            return Err(Error::invalid("cannot bin an empty sample"));
        }
        if k == 0 {
            return Err(Error::invalid("bin count must be positive"));
        }
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

        let target = n.div_ceil(k);
        let mut group = vec![0u32; n];
        let mut bin = 0u32;
        let mut size = 0usize;
        for (pos, &i) in order.iter().enumerate() {
            if size >= target && values[i] != values[order[pos - 1]] && (bin as usize) < k - 1 {
                bin += 1;
                size = 0;
            }
            group[i] = bin;
            size += 1;
        }
        let mut k_used = bin as usize + 1;

        // merge undersized bins upward; the top bin folds downward instead
        let mut merged = 0usize;
        loop {
            let mut counts = vec![0usize; k_used];
            for &g in &group {
                counts[g as usize] += 1;
            }
            let Some(small) = counts.iter().position(|&c| c < 2) else { break };
            if k_used == 1 {
                break; // nothing left to merge with
            }
            merged += 1;
            if small + 1 < k_used {
                // fold into the next bin up, shifting everything above down
                for g in group.iter_mut() {
                    if (*g as usize) > small {
                        *g -= 1;
                    }
                }
            } else {
                // top bin folds into its lower neighbor
                for g in group.iter_mut() {
                    if (*g as usize) == small {
                        *g -= 1;
                    }
                }
            }
            k_used -= 1;
        }

        Ok(Bins { group, k: k_used, merged })
    }

    /// Subtract the within-bin mean from `v`.
    pub fn demean(&self, v: &[Real]) -> Vec<Real> {
        let mut sum = vec![0.0; self.k];
        let mut cnt = vec![0usize; self.k];
        for (i, &g) in self.group.iter().enumerate() {
            sum[g as usize] += v[i];
            cnt[g as usize] += 1;
        }
        for b in 0..self.k {
            sum[b] /= cnt[b].max(1) as Real;
        }
        v.iter().zip(&self.group).map(|(&x, &g)| x - sum[g as usize]).collect()
    }
}

/// Slope on `t` from the regression of `y` on `t` plus bin fixed effects,
/// computed by within-bin demeaning (Frisch–Waugh). `None` when `t` has no
/// residual variation.
pub fn fwl_slope(y: &[Real], t: &[Real], bins: &Bins) -> Option<Real> {
    let ty = bins.demean(y);
    let tt = bins.demean(t);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..t.len() {
        num += tt[i] * ty[i];
        den += tt[i] * tt[i];
    }
    if den <= 1e-12 * t.len() as Real {
        None
    } else {
        Some(num / den)
    }
}

/// Design matrix `[cols | bin dummies]` (one dummy per bin, no intercept —
/// the dummies span it).
pub fn design_with_bins(cols: &[&[Real]], bins: Option<&Bins>) -> Mat<Real> {
    let n = cols.first().map_or_else(|| bins.map_or(0, |b| b.group.len()), |c| c.len());
    let kb = bins.map_or(0, |b| b.k);
    let k = cols.len() + kb;
    let mut rows: Vec<Vec<Real>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(k);
        for c in cols {
            row.push(c[i]);
        }
        if let Some(b) = bins {
            for g in 0..kb {
                row.push(if b.group[i] as usize == g { 1.0 } else { 0.0 });
            }
        }
        rows.push(row);
    }
    Mat::from_rows(&rows)
}

/// Which observation pairs co-vary in the sandwich meat.
pub enum Dependence<'a> {
    /// Heteroskedasticity-only (diagonal meat).
    Independence,
    /// Same randomization cluster.
    Clusters { cluster_of: &'a [u32] },
    /// Same randomization cluster or adjacent in the (pruned) interaction
    /// graph; `neighbors` is indexed by regression row and must already be
    /// expressed in row indices.
    ClustersOrAdjacent { cluster_of: &'a [u32], neighbors: &'a [Vec<u32>] },
}

/// Sandwich covariance of WLS coefficients under the given dependence model.
///
/// Meat = Σ over dependent pairs (i, j) of `w_i e_i x_i (w_j e_j x_j)'`,
/// with a unit kernel weight; under `Independence` this is the classic
/// heteroskedasticity-robust estimator.
pub fn hac_vcov(
    x: &Mat<Real>,
    w: &[Real],
    residuals: &[Real],
    xtwx_inv: &Mat<Real>,
    dep: &Dependence,
) -> Mat<Real> {
    let (n, k) = (x.rows(), x.cols());
    let u: Vec<Vec<Real>> = (0..n)
        .map(|i| x.row(i).iter().map(|&v| v * w[i] * residuals[i]).collect())
        .collect();
    let mut meat = Mat::zeros(k, k);
    let mut add = |a: &[Real], b: &[Real]| {
        for p in 0..k {
            if a[p] == 0.0 {
                continue;
            }
            for q in 0..k {
                *meat.at_mut(p, q) += a[p] * b[q];
            }
        }
    };
    match dep {
        Dependence::Independence => {
            for ui in &u {
                add(ui, ui);
            }
        }
        Dependence::Clusters { cluster_of } => {
            // Σ_c g_c g_c'
            let mut groups: std::collections::BTreeMap<u32, Vec<Real>> = Default::default();
            for (i, ui) in u.iter().enumerate() {
                let g = groups.entry(cluster_of[i]).or_insert_with(|| vec![0.0; k]);
                for p in 0..k {
                    g[p] += ui[p];
                }
            }
            for g in groups.values() {
                add(g, g);
            }
        }
        Dependence::ClustersOrAdjacent { cluster_of, neighbors } => {
            // explicit pair sweep with deduplication: same cluster OR edge OR i = j
            let mut members: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
            for (i, &c) in cluster_of.iter().enumerate() {
                members.entry(c).or_default().push(i as u32);
            }
            let mut seen: Vec<u32> = Vec::new();
            for i in 0..n {
                seen.clear();
                seen.push(i as u32);
                for &j in &members[&cluster_of[i]] {
                    if j != i as u32 {
                        seen.push(j);
                    }
                }
                for &j in &neighbors[i] {
                    if j != i as u32 && cluster_of[j as usize] != cluster_of[i] {
                        seen.push(j);
                    }
                }
                for &j in &seen {
                    add(&u[i], &u[j as usize]);
                }
            }
        }
    }
    linalg::sandwich(xtwx_inv, &meat)
}

/// Cluster-robust covariance with the CR1 small-sample factor
/// `G/(G-1) · (n-1)/(n-k)`.
pub fn cr1_vcov(
    x: &Mat<Real>,
    w: &[Real],
    residuals: &[Real],
    xtwx_inv: &Mat<Real>,
    cluster_of: &[u32],
) -> Result<Mat<Real>> {
    let (n, k) = (x.rows(), x.cols());
    let mut ids: Vec<u32> = cluster_of.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let g = ids.len();
    if g < 2 {
        return Err(Error::invalid("cluster-robust variance needs at least 2 clusters"));
    }
    if n <= k {
        return Err(Error::numerical("no residual degrees of freedom"));
    }
    let base = hac_vcov(x, w, residuals, xtwx_inv, &Dependence::Clusters { cluster_of });
    let factor =
        (g as Real / (g as Real - 1.0)) * ((n as Real - 1.0) / (n as Real - k as Real));
    let mut out = base;
    for p in 0..k {
        for q in 0..k {
            *out.at_mut(p, q) *= factor;
        }
    }
    Ok(out)
}

/// Replicate statistics that are linear in the null parameter.
///
/// All three randomization-inference procedures in this crate share one
/// structure: under the sharp null with parameter `η`, the statistic
/// recomputed on replicate assignment `b` is `θ̂⁽ᵇ⁾(η) = a_b + η·c_b`,
/// while the observed statistic does not depend on `η`. Storing `(a, c)`
/// makes scanning a whole null-parameter grid O(B) per grid point with no
/// re-randomization.
#[derive(Clone, Debug)]
pub struct RiLinear {
    /// Statistic on the realized assignment.
    pub theta_obs: Real,
    /// Replicate intercepts `a_b`.
    pub a: Vec<Real>,
    /// Replicate slopes `c_b` in the null parameter.
    pub c: Vec<Real>,
}

impl RiLinear {
    pub fn new(theta_obs: Real, a: Vec<Real>, c: Vec<Real>) -> RiLinear {
        assert_eq!(a.len(), c.len(), "replicate vectors misaligned");
        RiLinear { theta_obs, a, c }
    }

    pub fn n_replicates(&self) -> usize {
        self.a.len()
    }

    /// Replicate statistic under null parameter `eta`.
    pub fn theta_b(&self, eta: Real, b: usize) -> Real {
        self.a[b] + eta * self.c[b]
    }

    /// Two-sided point test of H₀(η): share of replicates at least as far
    /// from `η` as the observed statistic (ties count as extreme, and the
    /// count is floored at one so p stays in `[1/B, 1]`).
    pub fn p_point(&self, eta: Real) -> Real {
        let b = self.n_replicates();
        assert!(b > 0, "no replicates");
        let obs = (self.theta_obs - eta).abs();
        let count = (0..b).filter(|&i| (self.theta_b(eta, i) - eta).abs() >= obs).count();
        count.max(1) as Real / b as Real
    }

    /// Centered two-sided p-value `2·min(F, 1−F)` from the replicate rank of
    /// the observed statistic, with ties counted on both sides. This is the
    /// rule used for confidence-interval inversion: unlike the absolute-value
    /// rule it rejects on both the undershoot and overshoot side of the grid.
    pub fn p_centered(&self, eta: Real) -> Real {
        let b = self.n_replicates();
        assert!(b > 0, "no replicates");
        let mut le = 0usize;
        let mut ge = 0usize;
        for i in 0..b {
            let t = self.theta_b(eta, i);
            if t <= self.theta_obs {
                le += 1;
            }
            if t >= self.theta_obs {
                ge += 1;
            }
        }
        (2.0 * le.max(1).min(ge.max(1)) as Real / b as Real).min(1.0)
    }

    /// Invert the centered test over a grid: the interval hull of grid
    /// points with `p(η) > alpha`.
    pub fn invert(&self, grid: &[Real], alpha: Real) -> GridCi {
        let accepted: Vec<usize> =
            (0..grid.len()).filter(|&g| self.p_centered(grid[g]) > alpha).collect();
        match (accepted.first(), accepted.last()) {
            (Some(&lo), Some(&hi)) => GridCi {
                low: grid[lo],
                high: grid[hi],
                n_accepted: accepted.len(),
                empty: false,
                touches_edge: lo == 0 || hi == grid.len() - 1,
                contiguous: accepted.len() == hi - lo + 1,
            },
            _ => GridCi {
                low: Real::NAN,
                high: Real::NAN,
                n_accepted: 0,
                empty: true,
                touches_edge: false,
                contiguous: true,
            },
        }
    }
}

/// Result of grid test inversion.
#[derive(Clone, Copy, Debug)]
pub struct GridCi {
    pub low: Real,
    pub high: Real,
    pub n_accepted: usize,
    /// No grid point was accepted (grid misplaced or too coarse).
    pub empty: bool,
    /// An endpoint sits on the grid boundary; the interval may extend beyond.
    pub touches_edge: bool,
    /// Accepted set had no interior gaps (gaps indicate Monte Carlo noise at
    /// the boundary; the hull is still reported).
    pub contiguous: bool,
}

/// Build an [`RiLinear`] from replicate doses.
///
/// The statistic is the bin-adjusted slope of `y` on a dose (an assignment
/// indicator or a continuous exposure). Under a constant-per-dose-unit
/// sharp null `η`, outcomes transport across assignments as
/// `y + η·(dose_b − dose_obs)`, so the replicate slope is
/// `a_b + η·c_b` with `a_b = slope(y on dose_b)` and
/// `c_b = 1 − slope(dose_obs on dose_b)`. Replicates without residual dose
/// variation are skipped and counted.
pub fn ri_linear_from_doses(
    y: &[Real],
    dose_obs: &[Real],
    bins: &Bins,
    doses_b: impl Iterator<Item = Vec<Real>>,
) -> Result<(RiLinear, usize)> {
    let n = y.len();
    if dose_obs.len() != n || bins.group.len() != n {
        return Err(Error::invalid("outcome, dose, and bins misaligned"));
    }
    let theta_obs = fwl_slope(y, dose_obs, bins)
        .ok_or_else(|| Error::numerical("observed dose has no residual variation"))?;
    let mut a = Vec::new();
    let mut c = Vec::new();
    let mut degenerate = 0usize;
    for dose in doses_b {
        debug_assert_eq!(dose.len(), n);
        let tt = bins.demean(&dose);
        let mut den = 0.0;
        let mut num_y = 0.0;
        let mut num_d = 0.0;
        for i in 0..n {
            den += tt[i] * tt[i];
            num_y += tt[i] * y[i];
            num_d += tt[i] * dose_obs[i];
        }
        if den <= 1e-12 * n as Real {
            degenerate += 1;
        } else {
            a.push(num_y / den);
            c.push(1.0 - num_d / den);
        }
    }
    if a.is_empty() {
        return Err(Error::numerical("all replicate doses were degenerate"));
    }
    Ok((RiLinear::new(theta_obs, a, c), degenerate))
}

/// Evenly spaced grid of `n ≥ 2` points on `[center - half_width, center + half_width]`.
pub fn symmetric_grid(center: Real, half_width: Real, n: usize) -> Vec<Real> {
    assert!(n >= 2 && half_width > 0.0, "degenerate grid");
    let lo = center - half_width;
    let step = 2.0 * half_width / (n - 1) as Real;
    (0..n).map(|i| lo + step * i as Real).collect()
}

/// Empirical quantile (nearest-rank on the sorted copy).
pub fn quantile(values: &[Real], q: Real) -> Real {
    assert!(!values.is_empty() && (0.0..=1.0).contains(&q));
    let mut v = values.to_vec();
    v.sort_by(Real::total_cmp);
    let idx = ((q * (v.len() - 1) as Real).round() as usize).min(v.len() - 1);
    v[idx]
}

/// Two-sided normal p-value for `point / se`.
pub fn normal_two_sided_p(point: Real, se: Real) -> Real {
    if se <= 0.0 {
        return if point == 0.0 { 1.0 } else { 0.0 };
    }
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * n.cdf(-(point / se).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::wls;
    use rand::Rng;

    #[test]
    fn equal_count_bins_balance_and_keep_ties_together() {
        let values: Vec<Real> = (0..100).map(|i| (i / 2) as Real).collect();
        let bins = Bins::equal_count(&values, 10).unwrap();
        assert_eq!(bins.k, 10);
        let mut counts = vec![0usize; bins.k];
        for &g in &bins.group {
            counts[g as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c >= 2));
        // identical values share a bin
        for i in (0..100).step_by(2) {
            assert_eq!(bins.group[i], bins.group[i + 1]);
        }
    }

    #[test]
    fn undersized_bins_merge_upward() {
        let values: Vec<Real> = vec![0.0, 1.0, 2.0];
        let bins = Bins::equal_count(&values, 3).unwrap();
        assert!(bins.k < 3);
        assert!(bins.merged > 0);
        let mut counts = vec![0usize; bins.k];
        for &g in &bins.group {
            counts[g as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c >= 1));
    }

    #[test]
    fn fwl_equals_full_dummy_regression() {
        let mut rng = crate::rng::substream(11, "regress-test", 0);
        let n = 200;
        let pre: Vec<Real> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let t: Vec<Real> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let y: Vec<Real> =
            (0..n).map(|i| 0.3 * t[i] + 0.1 * pre[i] + rng.gen_range(-1.0..1.0)).collect();
        let bins = Bins::equal_count(&pre, 8).unwrap();

        let slope = fwl_slope(&y, &t, &bins).unwrap();

        let x = design_with_bins(&[&t], Some(&bins));
        let w = vec![1.0; n];
        let fit = wls(&x, &y, &w).unwrap();
        assert!((slope - fit.coef[0]).abs() < 1e-10, "{slope} vs {}", fit.coef[0]);
    }

    #[test]
    fn independence_hac_is_hc_sandwich() {
        let mut rng = crate::rng::substream(5, "regress-test", 1);
        let n = 50;
        let t: Vec<Real> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<Real> = (0..n).map(|i| 1.0 + 2.0 * t[i] + rng.gen_range(-0.5..0.5)).collect();
        let ones = vec![1.0; n];
        let x = design_with_bins(&[&ones, &t], None);
        let w = vec![1.0; n];
        let fit = wls(&x, &y, &w).unwrap();

        let v = hac_vcov(&x, &w, &fit.residuals, &fit.xtwx_inv, &Dependence::Independence);
        // manual HC0
        let mut meat = Mat::zeros(2, 2);
        for i in 0..n {
            let e = fit.residuals[i];
            let xi = x.row(i);
            for p in 0..2 {
                for q in 0..2 {
                    *meat.at_mut(p, q) += xi[p] * xi[q] * e * e;
                }
            }
        }
        let manual = linalg::sandwich(&fit.xtwx_inv, &meat);
        for p in 0..2 {
            for q in 0..2 {
                assert!((v.at(p, q) - manual.at(p, q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_units_inflate_dependent_variance() {
        // two copies of every unit, dependent pairs = the copies
        let mut rng = crate::rng::substream(9, "regress-test", 2);
        let n = 40;
        let mut t = Vec::new();
        let mut y = Vec::new();
        let mut cluster = Vec::new();
        for i in 0..n {
            let ti: Real = rng.gen_range(-1.0..1.0);
            let yi: Real = 0.5 * ti + rng.gen_range(-1.0..1.0);
            for _ in 0..2 {
                t.push(ti);
                y.push(yi);
                cluster.push(i as u32);
            }
        }
        let ones = vec![1.0; 2 * n];
        let x = design_with_bins(&[&ones, &t], None);
        let w = vec![1.0; 2 * n];
        let fit = wls(&x, &y, &w).unwrap();
        let indep = hac_vcov(&x, &w, &fit.residuals, &fit.xtwx_inv, &Dependence::Independence);
        let dep = hac_vcov(
            &x,
            &w,
            &fit.residuals,
            &fit.xtwx_inv,
            &Dependence::Clusters { cluster_of: &cluster },
        );
        assert!(dep.at(1, 1) >= indep.at(1, 1));
    }

    #[test]
    fn point_p_counts_ties_and_floors() {
        let ri = RiLinear::new(1.0, vec![1.0, 1.0, -1.0, 0.0], vec![0.0; 4]);
        assert!((ri.p_point(0.0) - 0.75).abs() < 1e-15);
        // nothing as extreme -> floored at 1/B
        let ri = RiLinear::new(10.0, vec![0.0, 0.1, -0.2, 0.3], vec![0.0; 4]);
        assert!((ri.p_point(0.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn centered_p_uses_both_tails() {
        let ri = RiLinear::new(2.0, vec![-1.0, 0.0, 1.0, 1.5], vec![0.0; 4]);
        // all replicates below the observed statistic: one-sided rank 0 -> floored
        assert!((ri.p_centered(0.0) - 0.5).abs() < 1e-15);
        let ri = RiLinear::new(0.5, vec![-1.0, 0.0, 1.0, 1.5], vec![0.0; 4]);
        // le = 2, ge = 2 -> p = 1
        assert!((ri.p_centered(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_inversion_recovers_the_acceptance_hull() {
        let a: Vec<Real> = (0..100).map(|b| b as Real - 49.5).collect();
        let ri = RiLinear::new(0.0, a, vec![1.0; 100]);
        let grid: Vec<Real> = (-60..=60).map(|g| g as Real).collect();
        let ci = ri.invert(&grid, 0.05);
        assert!(!ci.empty && !ci.touches_edge && ci.contiguous);
        assert_eq!(ci.low, -47.0);
        assert_eq!(ci.high, 47.0);
        // a grid that misses the acceptance region entirely
        let far: Vec<Real> = (200..=210).map(|g| g as Real).collect();
        assert!(ri.invert(&far, 0.05).empty);
    }

    #[test]
    fn replicate_statistic_is_linear_in_the_null_parameter() {
        let ri = RiLinear::new(0.3, vec![0.1, -0.4], vec![0.9, 1.2]);
        assert!((ri.theta_b(2.0, 1) - (-0.4 + 2.4)).abs() < 1e-15);
    }

    #[test]
    fn grid_and_quantile_helpers() {
        let g = symmetric_grid(1.0, 0.5, 5);
        assert_eq!(g, vec![0.5, 0.75, 1.0, 1.25, 1.5]);
        let v = vec![3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
    }

    #[test]
    fn cr1_needs_two_clusters() {
        let ones = vec![1.0; 4];
        let x = design_with_bins(&[&ones], None);
        let w = vec![1.0; 4];
        let fit = wls(&x, &[1.0, 2.0, 3.0, 4.0], &w).unwrap();
        assert!(cr1_vcov(&x, &w, &fit.residuals, &fit.xtwx_inv, &[0, 0, 0, 0]).is_err());
    }
}
