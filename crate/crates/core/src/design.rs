//! Two-stage cluster randomization with hole punching.
//!
//! Stage 1 flips one Bernoulli(p_t) coin per cluster; stage 2 flips an
//! independent Bernoulli(p_hp) coin per user and XORs it onto the cluster
//! bit. The XOR keeps every user's treatment probability strictly inside
//! (0, 1) while preserving strong within-cluster correlation, which is what
//! lets both direct and spillover estimands be identified from one design.
//!
//! All pairwise assignment probabilities have closed forms (see
//! [`propensities`]); [`enumerate_design`] provides the exact distribution
//! over full assignment vectors for small instances and is the oracle the
//! closed forms and every Horvitz–Thompson moment are tested against.

use crate::error::{Error, Result};
use crate::netgraph::ClusterAssignment;
use crate::rng;
use crate::Real;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Randomization parameters: cluster treatment share and hole-punch rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    /// Probability a cluster is assigned to treatment.
    pub p_t: Real,
    /// Per-user flip probability (hole punching).
    pub p_hp: Real,
}

impl DesignParams {
    /// Validated constructor: `p_t ∈ (0, 1)`, `p_hp ∈ [0, 0.5)`.
    pub fn new(p_t: Real, p_hp: Real) -> Result<Self> {
        if !(p_t > 0.0 && p_t < 1.0) {
            return Err(Error::invalid(format!("p_t must lie in (0, 1), got {p_t}")));
        }
        if !(0.0..0.5).contains(&p_hp) {
            return Err(Error::invalid(format!("p_hp must lie in [0, 0.5), got {p_hp}")));
        }
        Ok(DesignParams { p_t, p_hp })
    }
}

/// Exact marginal and pairwise assignment probabilities for a design.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PropensityTable {
    pub params: DesignParams,
    marginal: [Real; 2],
    joint_same: [[Real; 2]; 2],
    joint_cross: [[Real; 2]; 2],
}

impl PropensityTable {
    /// P(Z_i = t).
    #[inline]
    pub fn marginal(&self, t: bool) -> Real {
        self.marginal[t as usize]
    }

    /// P(Z_i = t1, Z_j = t2) for i ≠ j, by cluster relation.
    #[inline]
    pub fn joint(&self, same_cluster: bool, t1: bool, t2: bool) -> Real {
        if same_cluster {
            self.joint_same[t1 as usize][t2 as usize]
        } else {
            self.joint_cross[t1 as usize][t2 as usize]
        }
    }

    /// Correlation of two assignment indicators in the same cluster.
    pub fn within_cluster_correlation(&self) -> Real {
        let p1 = self.marginal(true);
        (self.joint(true, true, true) - p1 * p1) / (p1 * (1.0 - p1))
    }
}

/// Closed-form propensities for the two-stage XOR design.
///
/// With q = p_hp and p = p_t:
/// P(Z=1) = p + q − 2pq, same-cluster P(1,1) = p + q² − 2pq,
/// P(0,0) = 1 − 2q + q² − p + 2pq, P(1,0) = P(0,1) = q(1−q); cross-cluster
/// pairs are independent, so joints are products of marginals.
pub fn propensities(params: &DesignParams) -> PropensityTable {
    let (p, q) = (params.p_t, params.p_hp);
    let p1 = p + q - 2.0 * p * q;
    let p0 = 1.0 - p1;
    let s11 = p + q * q - 2.0 * p * q;
    let s00 = 1.0 - 2.0 * q + q * q - p + 2.0 * p * q;
    let s10 = q * (1.0 - q);
    PropensityTable {
        params: *params,
        marginal: [p0, p1],
        joint_same: [[s00, s10], [s10, s11]],
        joint_cross: [[p0 * p0, p0 * p1], [p1 * p0, p1 * p1]],
    }
}

/// One realized assignment of the design.
#[derive(Clone, Debug)]
pub struct Assignment {
    /// User ids, aligned with `cluster_of`, `flip`, `z`.
    pub ids: Vec<String>,
    pub cluster_of: Vec<u32>,
    /// Stage-1 bit per cluster.
    pub cluster_bits: Vec<bool>,
    /// Stage-2 flip per user.
    pub flips: Vec<bool>,
    /// Final assignment: `z[i] = cluster_bits[cluster_of[i]] ^ flips[i]`.
    pub z: Vec<bool>,
    pub params: DesignParams,
    pub seed: u64,
}

impl Assignment {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn n_treated(&self) -> usize {
        self.z.iter().filter(|&&z| z).count()
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.ids.binary_search_by(|x| x.as_str().cmp(id)).ok().map(|i| i as u32)
    }
}

/// Draw one assignment. Cluster bits come from the `assign/cluster_bits`
/// substream (cluster-id order), flips from `assign/flips` (user order), so
/// the draw is a pure function of `(clusters, params, seed)`.
pub fn assign(clusters: &ClusterAssignment, params: &DesignParams, seed: u64) -> Assignment {
    let (cluster_bits, z) = draw_z(clusters, params, seed);
    let flips: Vec<bool> = clusters
        .cluster_of
        .iter()
        .zip(&z)
        .map(|(&c, &zi)| zi ^ cluster_bits[c as usize])
        .collect();
    Assignment {
        ids: clusters.ids.clone(),
        cluster_of: clusters.cluster_of.clone(),
        cluster_bits,
        flips,
        z,
        params: *params,
        seed,
    }
}

fn draw_z(clusters: &ClusterAssignment, params: &DesignParams, seed: u64) -> (Vec<bool>, Vec<bool>) {
    let k = clusters.n_clusters();
    let mut rng_c = rng::substream(seed, "assign/cluster_bits", 0);
    let cluster_bits: Vec<bool> = (0..k).map(|_| rng_c.gen_bool(params.p_t)).collect();
    let mut rng_f = rng::substream(seed, "assign/flips", 0);
    let z = clusters
        .cluster_of
        .iter()
        .map(|&c| {
            let flip = params.p_hp > 0.0 && rng_f.gen_bool(params.p_hp);
            cluster_bits[c as usize] ^ flip
        })
        .collect();
    (cluster_bits, z)
}

/// Assignment vector of Monte Carlo replicate `b`, drawn from the stream
/// derived from `(master_seed, "replicate", b)`. Replicates are mutually
/// independent and order-independent, so MC loops parallelize freely.
pub fn replicate_z(
    clusters: &ClusterAssignment,
    params: &DesignParams,
    master_seed: u64,
    b: u64,
) -> Vec<bool> {
    draw_z(clusters, params, rng::derive(master_seed, "replicate", b)).1
}

/// Exact distribution over assignment vectors for a small instance.
pub struct DesignDistribution {
    n: usize,
    /// `prob[mask]` with bit i of `mask` = Z_i.
    prob: Vec<Real>,
}

/// Enumerate the design: every z ∈ {0,1}^n with its exact probability
/// (the stage-1 bits are marginalized analytically per cluster). Guarded to
/// n ≤ 20 users.
pub fn enumerate_design(
    clusters: &ClusterAssignment,
    params: &DesignParams,
) -> Result<DesignDistribution> {
    let n = clusters.n();
    if n > 20 {
        return Err(Error::invalid(format!(
            "enumeration is limited to 20 users, got {n}"
        )));
    }
    let members = clusters.members();
    let (p, q) = (params.p_t, params.p_hp);
    let mut prob = vec![0.0; 1usize << n];
    for (mask, slot) in prob.iter_mut().enumerate() {
        let mut pr = 1.0;
        for m in &members {
            // given the cluster bit, z_i = bit ^ flip_i
            let mut ones = 0u32;
            for &i in m {
                ones += (mask >> i & 1) as u32;
            }
            let zeros = m.len() as u32 - ones;
            // bit = 1: a z of 0 needs a flip; bit = 0: a z of 1 needs a flip
            let given1 = q.powi(zeros as i32) * (1.0 - q).powi(ones as i32);
            let given0 = q.powi(ones as i32) * (1.0 - q).powi(zeros as i32);
            pr *= p * given1 + (1.0 - p) * given0;
        }
        *slot = pr;
    }
    Ok(DesignDistribution { n, prob })
}

impl DesignDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Visit every assignment vector with its probability.
    pub fn for_each(&self, mut f: impl FnMut(&[bool], Real)) {
        let mut z = vec![false; self.n];
        for (mask, &pr) in self.prob.iter().enumerate() {
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = mask >> i & 1 == 1;
            }
            f(&z, pr);
        }
    }

    /// Exact expectation of a statistic of the assignment vector.
    pub fn expect(&self, mut f: impl FnMut(&[bool]) -> Real) -> Real {
        let mut acc = 0.0;
        self.for_each(|z, pr| acc += pr * f(z));
        acc
    }

    /// Exact variance of a statistic.
    pub fn variance(&self, mut f: impl FnMut(&[bool]) -> Real) -> Real {
        let mean = self.expect(&mut f);
        self.expect(|z| {
            let d = f(z) - mean;
            d * d
        })
    }

    /// Exact covariance of two statistics.
    pub fn covariance(
        &self,
        mut f: impl FnMut(&[bool]) -> Real,
        mut g: impl FnMut(&[bool]) -> Real,
    ) -> Real {
        let mf = self.expect(&mut f);
        let mg = self.expect(&mut g);
        self.expect(|z| (f(z) - mf) * (g(z) - mg))
    }

    /// Enumeration-exact P(Z_i = t): the reference for the closed forms.
    pub fn exact_marginal(&self, i: usize, t: bool) -> Real {
        let mut acc = 0.0;
        for (mask, &pr) in self.prob.iter().enumerate() {
            if (mask >> i & 1 == 1) == t {
                acc += pr;
            }
        }
        acc
    }

    /// Enumeration-exact P(Z_i = t1, Z_j = t2).
    pub fn exact_joint(&self, i: usize, j: usize, t1: bool, t2: bool) -> Real {
        let mut acc = 0.0;
        for (mask, &pr) in self.prob.iter().enumerate() {
            if (mask >> i & 1 == 1) == t1 && (mask >> j & 1 == 1) == t2 {
                acc += pr;
            }
        }
        acc
    }

    /// Total mass; 1 up to float rounding.
    pub fn total(&self) -> Real {
        self.prob.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_clusters(sizes: &[usize]) -> ClusterAssignment {
        let mut rows = Vec::new();
        let mut uid = 0;
        for (c, &s) in sizes.iter().enumerate() {
            for _ in 0..s {
                rows.push((format!("u{uid:03}"), c as u64, false));
                uid += 1;
            }
        }
        ClusterAssignment::from_pairs(rows).unwrap()
    }

    #[test]
    fn field_parameters_have_balanced_marginals() {
        let t = propensities(&DesignParams::new(0.5, 0.18).unwrap());
        assert!((t.marginal(true) - 0.5).abs() < 1e-12);
        assert!((t.marginal(false) - 0.5).abs() < 1e-12);
        assert!((t.joint(true, true, true) - 0.3524).abs() < 1e-12);
        assert!((t.joint(true, false, false) - 0.3524).abs() < 1e-12);
        assert!((t.joint(true, true, false) - 0.1476).abs() < 1e-12);
        assert!((t.within_cluster_correlation() - 0.4096).abs() < 1e-12);
    }

    #[test]
    fn no_hole_punching_degenerates_to_pure_cluster_design() {
        let t = propensities(&DesignParams::new(0.3, 0.0).unwrap());
        assert_eq!(t.joint(true, true, false), 0.0);
        assert!((t.within_cluster_correlation() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parameter_validation() {
        assert!(DesignParams::new(0.0, 0.1).is_err());
        assert!(DesignParams::new(1.0, 0.1).is_err());
        assert!(DesignParams::new(0.5, 0.5).is_err());
        assert!(DesignParams::new(0.5, -0.01).is_err());
        assert!(DesignParams::new(0.5, 0.0).is_ok());
    }

    #[test]
    fn joint_rows_sum_to_marginals() {
        for &(p, q) in &[(0.5, 0.18), (0.2, 0.05), (0.8, 0.49), (0.37, 0.0)] {
            let t = propensities(&DesignParams::new(p, q).unwrap());
            for t1 in [false, true] {
                for same in [false, true] {
                    let row: Real = t.joint(same, t1, false) + t.joint(same, t1, true);
                    assert!((row - t.marginal(t1)).abs() < 1e-14, "p={p} q={q}");
                }
            }
            let total: Real = [false, true]
                .iter()
                .flat_map(|&a| [false, true].map(|b| t.joint(true, a, b)))
                .sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn xor_identity_holds_for_every_user() {
        let clusters = tiny_clusters(&[3, 4, 2, 1]);
        let params = DesignParams::new(0.4, 0.2).unwrap();
        let a = assign(&clusters, &params, 99);
        for i in 0..a.n() {
            assert_eq!(a.z[i], a.cluster_bits[a.cluster_of[i] as usize] ^ a.flips[i]);
        }
    }

    #[test]
    fn assignment_is_deterministic_and_replicas_match_derived_seeds() {
        let clusters = tiny_clusters(&[2, 3, 3]);
        let params = DesignParams::new(0.5, 0.18).unwrap();
        let a = assign(&clusters, &params, 7);
        let b = assign(&clusters, &params, 7);
        assert_eq!(a.z, b.z);
        assert_eq!(a.cluster_bits, b.cluster_bits);

        let z0 = replicate_z(&clusters, &params, 31, 0);
        let direct = assign(&clusters, &params, rng::derive(31, "replicate", 0));
        assert_eq!(z0, direct.z);
        let z1 = replicate_z(&clusters, &params, 31, 1);
        assert_ne!(z0, z1);
    }

    #[test]
    fn empirical_within_cluster_correlation_matches_analytic() {
        // 10_000 clusters of 3: the pair correlation concentrates hard
        let clusters = tiny_clusters(&vec![3; 10_000]);
        let params = DesignParams::new(0.5, 0.18).unwrap();
        let table = propensities(&params);
        let a = assign(&clusters, &params, 2024);
        let members = clusters.members();
        let (mut s1, mut s2, mut s11, mut npairs) = (0.0, 0.0, 0.0, 0.0);
        for m in &members {
            for x in 0..m.len() {
                for y in x + 1..m.len() {
                    let (zi, zj) = (a.z[m[x] as usize] as u8 as Real, a.z[m[y] as usize] as u8 as Real);
                    s1 += zi;
                    s2 += zj;
                    s11 += zi * zj;
                    npairs += 1.0;
                }
            }
        }
        let (m1, m2, m11) = (s1 / npairs, s2 / npairs, s11 / npairs);
        let corr = (m11 - m1 * m2) / ((m1 * (1.0 - m1)).sqrt() * (m2 * (1.0 - m2)).sqrt());
        assert!(
            (corr - table.within_cluster_correlation()).abs() < 0.02,
            "empirical {corr} vs analytic {}",
            table.within_cluster_correlation()
        );
    }

    #[test]
    fn enumeration_matches_closed_forms() {
        let mut stream = rng::substream(17, "design-test", 0);
        for trial in 0..10 {
            let p: Real = stream.gen_range(0.05..0.95);
            let q: Real = stream.gen_range(0.0..0.5);
            let params = DesignParams::new(p, q).unwrap();
            let clusters = tiny_clusters(&[3, 2, 4]);
            let dist = enumerate_design(&clusters, &params).unwrap();
            let table = propensities(&params);

            assert!((dist.total() - 1.0).abs() < 1e-12, "trial {trial}");
            for i in 0..clusters.n() {
                for t in [false, true] {
                    assert!(
                        (dist.exact_marginal(i, t) - table.marginal(t)).abs() < 1e-12,
                        "marginal, trial {trial}"
                    );
                }
            }
            let members = clusters.members();
            // same-cluster pair and cross-cluster pair
            let (i, j) = (members[0][0] as usize, members[0][1] as usize);
            let (u, v) = (members[0][0] as usize, members[1][0] as usize);
            for t1 in [false, true] {
                for t2 in [false, true] {
                    assert!(
                        (dist.exact_joint(i, j, t1, t2) - table.joint(true, t1, t2)).abs() < 1e-12
                    );
                    assert!(
                        (dist.exact_joint(u, v, t1, t2) - table.joint(false, t1, t2)).abs() < 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn enumeration_guard_rejects_large_instances() {
        let clusters = tiny_clusters(&vec![3; 7]);
        assert!(enumerate_design(&clusters, &DesignParams::new(0.5, 0.1).unwrap()).is_err());
    }

    #[test]
    fn two_user_cluster_hand_probability() {
        // P(z = (1,1)) for one cluster of two: p(1-q)^2 + (1-p)q^2
        let params = DesignParams::new(0.3, 0.2).unwrap();
        let clusters = tiny_clusters(&[2]);
        let dist = enumerate_design(&clusters, &params).unwrap();
        let want = 0.3 * 0.8 * 0.8 + 0.7 * 0.2 * 0.2;
        let got = dist.exact_joint(0, 1, true, true);
        assert!((got - want).abs() < 1e-15);
    }
}
