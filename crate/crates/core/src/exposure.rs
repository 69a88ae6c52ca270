//! Neighborhood-exposure classification and Hájek spillover estimation.
//!
//! A user's exposure summarizes the treatment mix of their interaction
//! neighborhood: with undirected weight `W_i` and treated-neighbor weight
//! `W_iT`, the user is high-exposed when `W_iT / W_i ≥ q` and low-exposed
//! when `(W_i − W_iT) / W_i ≥ q`, with `q ∈ (0.5, 1]` so the two cannot
//! overlap; everything else (including isolated users) stays unclassified.
//! Crossing exposure with own assignment yields four analysis conditions.
//!
//! Condition propensities have no useful closed form — they depend on the
//! whole neighborhood joint — so they are estimated by Monte Carlo over
//! replicate assignments with integer tallies (bit-for-bit deterministic
//! for a given seed). Condition means are then inverse-propensity-weighted
//! Hájek means, computed as a weighted regression on condition dummies so
//! baseline bins slot in as extra columns, with a network-HAC sandwich
//! whose dependent pairs share a cluster or a pruned-graph edge.

use crate::design::{replicate_z, DesignParams};
use crate::error::{Error, Result};
use crate::linalg::{quad_form, wls, Mat};
use crate::netgraph::{ClusterAssignment, InteractionGraph, PrunedGraph};
use crate::regress::{hac_vcov, normal_two_sided_p, Bins, Dependence};
use crate::{Real, Z975};
use serde::Serialize;

/// Neighborhood treatment saturation bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodExposure {
    Low,
    High,
    Unclassified,
}

/// Own assignment × neighborhood exposure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    ControlLow,
    ControlHigh,
    TreatedLow,
    TreatedHigh,
}

impl Condition {
    pub const ALL: [Condition; 4] =
        [Condition::ControlLow, Condition::ControlHigh, Condition::TreatedLow, Condition::TreatedHigh];

    pub fn index(self) -> usize {
        match self {
            Condition::ControlLow => 0,
            Condition::ControlHigh => 1,
            Condition::TreatedLow => 2,
            Condition::TreatedHigh => 3,
        }
    }

    fn from_parts(z: bool, e: NeighborhoodExposure) -> Option<Condition> {
        match (z, e) {
            (false, NeighborhoodExposure::Low) => Some(Condition::ControlLow),
            (false, NeighborhoodExposure::High) => Some(Condition::ControlHigh),
            (true, NeighborhoodExposure::Low) => Some(Condition::TreatedLow),
            (true, NeighborhoodExposure::High) => Some(Condition::TreatedHigh),
            (_, NeighborhoodExposure::Unclassified) => None,
        }
    }
}

/// Exposure and condition of every user under one assignment.
#[derive(Clone, Debug)]
pub struct ExposureClassification {
    pub q: Real,
    pub exposure: Vec<NeighborhoodExposure>,
    /// `None` for unclassified users.
    pub condition: Vec<Option<Condition>>,
}

fn check_q(q: Real) -> Result<()> {
    if !(q > 0.5 && q <= 1.0) {
        return Err(Error::invalid(format!("exposure threshold q must lie in (0.5, 1], got {q}")));
    }
    Ok(())
}

/// Classify every user's neighborhood under assignment `z` (aligned with
/// the graph's id order).
pub fn classify_exposure(
    graph: &InteractionGraph,
    z: &[bool],
    q: Real,
) -> Result<ExposureClassification> {
    check_q(q)?;
    if z.len() != graph.n() {
        return Err(Error::invalid("assignment misaligned with graph"));
    }
    let exposure: Vec<NeighborhoodExposure> =
        (0..graph.n() as u32).map(|i| exposure_of(graph, z, q, i)).collect();
    let condition = exposure.iter().zip(z).map(|(&e, &zi)| Condition::from_parts(zi, e)).collect();
    Ok(ExposureClassification { q, exposure, condition })
}

fn exposure_of(graph: &InteractionGraph, z: &[bool], q: Real, i: u32) -> NeighborhoodExposure {
    let mut total = 0.0;
    let mut treated = 0.0;
    for &(j, w) in graph.und_neighbors(i) {
        total += w;
        if z[j as usize] {
            treated += w;
        }
    }
    if total <= 0.0 {
        NeighborhoodExposure::Unclassified
    } else if treated / total >= q {
        NeighborhoodExposure::High
    } else if (total - treated) / total >= q {
        NeighborhoodExposure::Low
    } else {
        NeighborhoodExposure::Unclassified
    }
}

/// Monte Carlo condition propensities, kept as integer tallies.
#[derive(Clone, Debug)]
pub struct ExposurePropensities {
    /// `counts[user][condition]` over the replicate draws.
    pub counts: Vec<[u64; 4]>,
    pub replicates: u64,
    pub q: Real,
}

impl ExposurePropensities {
    /// Estimated P(user lands in condition).
    pub fn pi(&self, i: usize, c: Condition) -> Real {
        self.counts[i][c.index()] as Real / self.replicates as Real
    }
}

/// Estimate condition propensities by replicating the design `replicates`
/// times from the `(seed, "replicate", b)` streams.
pub fn mc_exposure_propensities(
    graph: &InteractionGraph,
    clusters: &ClusterAssignment,
    params: &DesignParams,
    q: Real,
    replicates: u64,
    seed: u64,
) -> Result<ExposurePropensities> {
    check_q(q)?;
    if clusters.ids != *graph.ids() {
        return Err(Error::invalid("cluster assignment and graph cover different users"));
    }
    if replicates == 0 {
        return Err(Error::invalid("propensity estimation needs at least one replicate"));
    }
    let n = graph.n();
    let mut counts = vec![[0u64; 4]; n];
    for b in 0..replicates {
        let z = replicate_z(clusters, params, seed, b);
        for i in 0..n as u32 {
            let e = exposure_of(graph, &z, q, i);
            if let Some(c) = Condition::from_parts(z[i as usize], e) {
                counts[i as usize][c.index()] += 1;
            }
        }
    }
    Ok(ExposurePropensities { counts, replicates, q })
}

/// One condition-vs-baseline contrast from the Hájek fit.
#[derive(Clone, Debug, Serialize)]
pub struct ContrastEstimate {
    pub condition: Condition,
    pub baseline: Condition,
    pub point: Real,
    pub std_error: Real,
    pub ci_low: Real,
    pub ci_high: Real,
    pub p_value: Real,
    pub pct_change: Real,
}

/// Inverse-propensity-weighted condition means with design-aware errors.
#[derive(Clone, Debug, Serialize)]
pub struct ExposureEstimate {
    /// Adjusted condition means, indexed by [`Condition::index`].
    pub condition_means: [Real; 4],
    pub std_errors: [Real; 4],
    /// Contrasts of each non-baseline condition against control-low.
    pub contrasts: Vec<ContrastEstimate>,
    pub n_used: usize,
    pub n_per_condition: [usize; 4],
    /// Units dropped because their observed-condition propensity fell below
    /// the trim threshold.
    pub trimmed: usize,
    /// Among the trimmed, units whose observed condition never occurred in
    /// the Monte Carlo draws at all (propensity exactly zero).
    pub zero_propensity: usize,
    /// Unclassified (condition-less) units excluded up front.
    pub unclassified: usize,
    pub bins_used: usize,
}

/// Options for [`hajek_estimate`].
#[derive(Clone, Copy, Debug)]
pub struct HajekOptions {
    /// Drop units with observed-condition propensity below this.
    pub trim_threshold: Real,
    /// Equal-count baseline bins (0 = no adjustment).
    pub bins: usize,
}

impl Default for HajekOptions {
    fn default() -> Self {
        HajekOptions { trim_threshold: 1e-4, bins: 0 }
    }
}

/// Hájek estimation of the four condition means.
///
/// Weighted least squares of `delta` on the four condition dummies (plus
/// optional baseline bins, first bin dropped against collinearity) with
/// weights `1/π̂`. With no bins the coefficients are exactly the Hájek
/// ratios `Σ wΔ / Σ w` per condition. Variances use the network sandwich:
/// pairs co-vary when they share a randomization cluster or a pruned-graph
/// edge.
pub fn hajek_estimate(
    delta: &[Real],
    baseline: Option<&[Real]>,
    class: &ExposureClassification,
    props: &ExposurePropensities,
    cluster_of: &[u32],
    pruned: Option<&PrunedGraph>,
    opts: &HajekOptions,
) -> Result<ExposureEstimate> {
    let n = delta.len();
    if class.condition.len() != n || cluster_of.len() != n {
        return Err(Error::invalid("exposure inputs misaligned"));
    }
    if props.counts.len() != n {
        return Err(Error::invalid("propensities misaligned with sample"));
    }

    // keep classified units with usable propensities
    let mut rows: Vec<usize> = Vec::new();
    let mut weights: Vec<Real> = Vec::new();
    let mut trimmed = 0usize;
    let mut zero_propensity = 0usize;
    let mut unclassified = 0usize;
    for i in 0..n {
        match class.condition[i] {
            None => unclassified += 1,
            Some(c) => {
                let pi = props.pi(i, c);
                if pi < opts.trim_threshold {
                    trimmed += 1;
                    if pi == 0.0 {
                        zero_propensity += 1;
                    }
                } else {
                    rows.push(i);
                    weights.push(1.0 / pi);
                }
            }
        }
    }
    if rows.len() < 8 {
        return Err(Error::invalid(format!(
            "only {} usable units after exposure classification and trimming",
            rows.len()
        )));
    }

    let y: Vec<Real> = rows.iter().map(|&i| delta[i]).collect();
    let cond: Vec<usize> =
        rows.iter().map(|&i| class.condition[i].expect("kept row classified").index()).collect();
    let mut n_per_condition = [0usize; 4];
    for &c in &cond {
        n_per_condition[c] += 1;
    }
    if n_per_condition.iter().any(|&c| c == 0) {
        return Err(Error::invalid("a condition has no usable units; cannot fit all four means"));
    }

    // condition dummies, then optional bin dummies with the first dropped
    let bins = match baseline {
        Some(v) if opts.bins >= 2 => {
            let kept: Vec<Real> = rows.iter().map(|&i| v[i]).collect();
            Some(Bins::equal_count(&kept, opts.bins)?)
        }
        _ => None,
    };
    let kb = bins.as_ref().map_or(0, |b| b.k.saturating_sub(1));
    let k = 4 + kb;
    let mut xr: Vec<Vec<Real>> = Vec::with_capacity(rows.len());
    for (r, &c) in cond.iter().enumerate() {
        let mut row = vec![0.0; k];
        row[c] = 1.0;
        if let Some(b) = &bins {
            let g = b.group[r] as usize;
            if g >= 1 {
                row[4 + g - 1] = 1.0;
            }
        }
        xr.push(row);
    }
    let x = Mat::from_rows(&xr);
    let fit = wls(&x, &y, &weights)?;

    // dependence in regression-row indices
    let row_of: std::collections::BTreeMap<usize, u32> =
        rows.iter().enumerate().map(|(r, &i)| (i, r as u32)).collect();
    let cluster_rows: Vec<u32> = rows.iter().map(|&i| cluster_of[i]).collect();
    let neighbor_rows: Vec<Vec<u32>> = match pruned {
        Some(p) => rows
            .iter()
            .map(|&i| {
                p.as_graph()
                    .und_neighbors(i as u32)
                    .iter()
                    .filter_map(|&(j, _)| row_of.get(&(j as usize)).copied())
                    .collect()
            })
            .collect(),
        None => Vec::new(),
    };
    let dep = match pruned {
        Some(_) => Dependence::ClustersOrAdjacent {
            cluster_of: &cluster_rows,
            neighbors: &neighbor_rows,
        },
        None => Dependence::Clusters { cluster_of: &cluster_rows },
    };
    let vcov = hac_vcov(&x, &weights, &fit.residuals, &fit.xtwx_inv, &dep);

    let condition_means = [fit.coef[0], fit.coef[1], fit.coef[2], fit.coef[3]];
    let std_errors = [
        vcov.at(0, 0).max(0.0).sqrt(),
        vcov.at(1, 1).max(0.0).sqrt(),
        vcov.at(2, 2).max(0.0).sqrt(),
        vcov.at(3, 3).max(0.0).sqrt(),
    ];
    let contrast = |c: Condition| -> ContrastEstimate {
        let mut v = vec![0.0; k];
        v[Condition::ControlLow.index()] = -1.0;
        v[c.index()] = 1.0;
        let point = condition_means[c.index()] - condition_means[0];
        let se = quad_form(&vcov, &v).max(0.0).sqrt();
        ContrastEstimate {
            condition: c,
            baseline: Condition::ControlLow,
            point,
            std_error: se,
            ci_low: point - Z975 * se,
            ci_high: point + Z975 * se,
            p_value: normal_two_sided_p(point, se),
            pct_change: (point.exp() - 1.0) * 100.0,
        }
    };
    Ok(ExposureEstimate {
        condition_means,
        std_errors,
        contrasts: vec![
            contrast(Condition::TreatedLow),
            contrast(Condition::ControlHigh),
            contrast(Condition::TreatedHigh),
        ],
        n_used: rows.len(),
        n_per_condition,
        trimmed,
        zero_propensity,
        unclassified,
        bins_used: bins.as_ref().map_or(0, |b| b.k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{assign, enumerate_design, DesignParams};
    use rand::Rng;

    fn graph(edges: &[(&str, &str, Real)]) -> InteractionGraph {
        InteractionGraph::from_weighted_edges(
            edges.iter().map(|&(a, b, w)| (a.to_string(), b.to_string(), w)),
        )
        .unwrap()
    }

    fn clusters_of(ids: &[&str], of: &[u64]) -> ClusterAssignment {
        ClusterAssignment::from_pairs(
            ids.iter().zip(of).map(|(id, &c)| (id.to_string(), c, false)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn path_graph_hand_classification() {
        // a -3- b -1- c (undirected weights), a treated
        let g = graph(&[("a", "b", 3.0), ("b", "c", 1.0)]);
        let z = [true, false, false];
        let cls = classify_exposure(&g, &z, 0.75).unwrap();
        assert_eq!(cls.exposure[0], NeighborhoodExposure::Low); // a: no treated neighbor
        assert_eq!(cls.exposure[1], NeighborhoodExposure::High); // b: 3/4 = 0.75, boundary counts
        assert_eq!(cls.exposure[2], NeighborhoodExposure::Low); // c: only control neighbor
        assert_eq!(cls.condition[0], Some(Condition::TreatedLow));
        assert_eq!(cls.condition[1], Some(Condition::ControlHigh));
        assert_eq!(cls.condition[2], Some(Condition::ControlLow));
    }

    #[test]
    fn threshold_must_exceed_half() {
        let g = graph(&[("a", "b", 1.0)]);
        assert!(classify_exposure(&g, &[true, false], 0.5).is_err());
        assert!(classify_exposure(&g, &[true, false], 1.01).is_err());
        assert!(classify_exposure(&g, &[true, false], 1.0).is_ok());
    }

    #[test]
    fn mixed_neighborhoods_stay_unclassified() {
        // b sees exactly half treated weight under q = 0.6: neither bucket
        let g = graph(&[("a", "b", 1.0), ("b", "c", 1.0)]);
        let z = [true, false, false];
        let cls = classify_exposure(&g, &z, 0.6).unwrap();
        assert_eq!(cls.exposure[1], NeighborhoodExposure::Unclassified);
        assert_eq!(cls.condition[1], None);
        // the same neighborhood is decisive once q drops to the boundary 0.51
        let cls2 = classify_exposure(&g, &[true, false, true], 0.51).unwrap();
        assert_eq!(cls2.exposure[1], NeighborhoodExposure::High);
    }

    /// Monte Carlo propensities against the enumeration oracle on a small
    /// instance: every estimate within 3 binomial standard errors.
    #[test]
    fn mc_propensities_match_enumeration() {
        let g = graph(&[
            ("a", "b", 2.0),
            ("b", "c", 1.0),
            ("c", "d", 3.0),
            ("d", "e", 1.0),
            ("e", "f", 2.0),
            ("a", "f", 1.0),
        ]);
        let clusters = clusters_of(&["a", "b", "c", "d", "e", "f"], &[0, 0, 0, 1, 1, 1]);
        let params = DesignParams::new(0.5, 0.18).unwrap();
        let q = 0.7;
        let dist = enumerate_design(&clusters, &params).unwrap();

        // exact propensities by enumeration
        let n = g.n();
        let mut exact = vec![[0.0; 4]; n];
        dist.for_each(|z, pr| {
            for i in 0..n as u32 {
                let e = exposure_of(&g, z, q, i);
                if let Some(c) = Condition::from_parts(z[i as usize], e) {
                    exact[i as usize][c.index()] += pr;
                }
            }
        });

        let b = 20_000u64;
        let mc = mc_exposure_propensities(&g, &clusters, &params, q, b, 77).unwrap();
        for i in 0..n {
            for c in Condition::ALL {
                let p = exact[i][c.index()];
                let se = (p * (1.0 - p) / b as Real).sqrt();
                let err = (mc.pi(i, c) - p).abs();
                assert!(err <= 3.0 * se + 1e-9, "user {i} {c:?}: {err} vs 3se {}", 3.0 * se);
            }
        }
    }

    /// Without covariates the regression coefficients are exactly the
    /// weighted condition means.
    #[test]
    fn hajek_equals_weighted_ratio_oracle() {
        let mut rng = crate::rng::substream(7, "exposure-test", 0);
        // synthetic classification: assign conditions directly
        let n = 60;
        let condition: Vec<Option<Condition>> =
            (0..n).map(|i| Some(Condition::ALL[i % 4])).collect();
        let class = ExposureClassification {
            q: 0.75,
            exposure: vec![NeighborhoodExposure::Low; n],
            condition,
        };
        let mut counts = vec![[0u64; 4]; n];
        let b = 1000u64;
        for (i, row) in counts.iter_mut().enumerate() {
            let c = class.condition[i].unwrap().index();
            row[c] = rng.gen_range(50..=b); // propensity in [0.05, 1]
        }
        let props = ExposurePropensities { counts, replicates: b, q: 0.75 };
        let delta: Vec<Real> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let cluster_of: Vec<u32> = (0..n as u32).collect();

        let est = hajek_estimate(
            &delta,
            None,
            &class,
            &props,
            &cluster_of,
            None,
            &HajekOptions::default(),
        )
        .unwrap();

        for c in Condition::ALL {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                if class.condition[i] == Some(c) {
                    let w = 1.0 / props.pi(i, c);
                    num += w * delta[i];
                    den += w;
                }
            }
            assert!(
                (est.condition_means[c.index()] - num / den).abs() < 1e-10,
                "{c:?}: {} vs {}",
                est.condition_means[c.index()],
                num / den
            );
        }
        assert_eq!(est.n_used, n);
        assert_eq!(est.contrasts.len(), 3);
        let tl = &est.contrasts[0];
        assert!(
            (tl.point - (est.condition_means[2] - est.condition_means[0])).abs() < 1e-12
        );
    }

    #[test]
    fn trimming_drops_rare_conditions_and_flags_zeros() {
        let n = 40;
        let condition: Vec<Option<Condition>> = (0..n)
            .map(|i| if i == 0 { None } else { Some(Condition::ALL[i % 4]) })
            .collect();
        let class = ExposureClassification {
            q: 0.8,
            exposure: vec![NeighborhoodExposure::Low; n],
            condition,
        };
        let mut counts = vec![[0u64; 4]; n];
        for i in 0..n {
            if let Some(c) = class.condition[i] {
                counts[i][c.index()] = 5000;
            }
        }
        counts[1] = [0; 4]; // observed condition never simulated
        counts[2][class.condition[2].unwrap().index()] = 1; // below 1e-4 of 50k
        let props = ExposurePropensities { counts, replicates: 50_000, q: 0.8 };
        let delta = vec![1.0; n];
        let cluster_of: Vec<u32> = (0..n as u32).map(|i| i % 7).collect();
        let est = hajek_estimate(
            &delta,
            None,
            &class,
            &props,
            &cluster_of,
            None,
            &HajekOptions::default(),
        )
        .unwrap();
        assert_eq!(est.unclassified, 1);
        assert_eq!(est.trimmed, 2);
        assert_eq!(est.zero_propensity, 1);
        assert_eq!(est.n_used, n - 3);
    }

    /// End-to-end on a simulated network: planted exposure effect shows up
    /// in the high-exposure contrasts, and the fit is deterministic.
    #[test]
    fn planted_spillover_is_detected() {
        let mut rng = crate::rng::substream(21, "exposure-test", 1);
        // ring of 30 triangles: tight clusters, strong within-cluster weight
        let mut edges: Vec<(String, String, Real)> = Vec::new();
        let id = |c: usize, k: usize| format!("u{c:02}_{k}");
        for c in 0..30 {
            for a in 0..3 {
                for b in (a + 1)..3 {
                    edges.push((id(c, a), id(c, b), 5.0));
                }
            }
            edges.push((id(c, 0), id((c + 1) % 30, 1), 0.5)); // weak bridge
        }
        let g = InteractionGraph::from_weighted_edges(edges.into_iter()).unwrap();
        let clusters = ClusterAssignment::from_pairs(
            g.ids()
                .iter()
                .map(|s| (s.clone(), s[1..3].parse::<u64>().unwrap(), false))
                .collect(),
        )
        .unwrap();
        let params = DesignParams::new(0.5, 0.1).unwrap();
        let a = assign(&clusters, &params, 99);
        let class = classify_exposure(&g, &a.z, 0.7).unwrap();
        let props = mc_exposure_propensities(&g, &clusters, &params, 0.7, 4000, 5).unwrap();

        // outcome drops by 0.5 under high exposure, plus noise
        let delta: Vec<Real> = (0..g.n())
            .map(|i| {
                let hi = class.exposure[i] == NeighborhoodExposure::High;
                rng.gen_range(-0.1..0.1) + if hi { -0.5 } else { 0.0 }
            })
            .collect();
        let baseline: Vec<Real> = (0..g.n()).map(|_| rng.gen_range(0.0..4.0)).collect();
        let pruned = g.prune(2, 2);
        let opts = HajekOptions { bins: 3, ..Default::default() };
        let est = hajek_estimate(
            &delta,
            Some(&baseline),
            &class,
            &props,
            &clusters.cluster_of,
            Some(&pruned),
            &opts,
        )
        .unwrap();
        let est2 = hajek_estimate(
            &delta,
            Some(&baseline),
            &class,
            &props,
            &clusters.cluster_of,
            Some(&pruned),
            &opts,
        )
        .unwrap();
        assert_eq!(format!("{est:?}"), format!("{est2:?}"));

        let ch = &est.contrasts[1]; // control-high vs control-low
        let th = &est.contrasts[2]; // treated-high vs control-low
        assert!(ch.point < -0.3, "control-high contrast {}", ch.point);
        assert!(th.point < -0.3, "treated-high contrast {}", th.point);
        let tl = &est.contrasts[0]; // treated-low vs control-low: no planted effect
        assert!(tl.point.abs() < 0.2, "treated-low contrast {}", tl.point);
        assert!(est.std_errors.iter().all(|s| s.is_finite() && *s >= 0.0));
    }
}
