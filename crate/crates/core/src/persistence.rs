//! Persistence of direct effects after the intervention window.
//!
//! The carry-over regression relates plain (unrescaled) period differences:
//! `Y_post − Y_pre` on `Y_during − Y_pre`, with equal-count baseline bins
//! absorbing level effects. The slope β is the fraction of the during-period
//! change that survives into the post period; cluster-robust errors respect
//! the randomization clusters, which is the dependence that matters because
//! the during-period change is assignment-driven.

use crate::error::Result;
use crate::linalg::{wls, Mat};
use crate::outcomes::OutcomePanel;
use crate::regress::{cr1_vcov, design_with_bins, normal_two_sided_p, Bins};
use crate::{Real, Z975};
use serde::Serialize;

/// Carry-over estimate.
#[derive(Clone, Debug, Serialize)]
pub struct PersistenceEstimate {
    /// Slope of the post difference on the during difference.
    pub beta: Real,
    pub std_error: Real,
    pub ci_low: Real,
    pub ci_high: Real,
    pub p_value: Real,
    pub n: usize,
    pub n_clusters: usize,
    pub bins_used: usize,
}

/// Fit the carry-over regression on a panel's period outcomes.
///
/// Differences are plain `Y_period − Y_pre`: the rescaled differences used
/// for treatment-effect estimation would mix the trend constant into the
/// slope. `bins_k` equal-count bins on `Y_pre` (merged down as the data
/// allows) enter as fixed effects.
pub fn estimate_persistence(
    panel: &OutcomePanel,
    cluster_of: &[u32],
    bins_k: usize,
) -> Result<PersistenceEstimate> {
    let n = panel.n();
    if cluster_of.len() != n {
        return Err(crate::Error::invalid("clustering misaligned with panel"));
    }
    let d_during: Vec<Real> =
        (0..n).map(|i| panel.y_during[i] - panel.y_pre[i]).collect();
    let d_post: Vec<Real> = (0..n).map(|i| panel.y_post[i] - panel.y_pre[i]).collect();
    let bins = Bins::equal_count(&panel.y_pre, bins_k)?;
    let x: Mat<Real> = design_with_bins(&[&d_during], Some(&bins));
    let w = vec![1.0; n];
    let fit = wls(&x, &d_post, &w)?;
    let vcov = cr1_vcov(&x, &w, &fit.residuals, &fit.xtwx_inv, cluster_of)?;
    let beta = fit.coef[0];
    let std_error = vcov.at(0, 0).max(0.0).sqrt();
    let mut clusters = cluster_of.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    Ok(PersistenceEstimate {
        beta,
        std_error,
        ci_low: beta - Z975 * std_error,
        ci_high: beta + Z975 * std_error,
        p_value: normal_two_sided_p(beta, std_error),
        n,
        n_clusters: clusters.len(),
        bins_used: bins.k,
    })
}
