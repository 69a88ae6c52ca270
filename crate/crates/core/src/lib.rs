//! Design-based estimation toolkit for cluster-randomized experiments on
//! interaction networks.
//!
//! The crate covers the full workflow of a two-stage randomized experiment
//! run on a social interaction graph:
//!
//! * [`netgraph`] — build and prune the interaction graph, carve it into
//!   well-separated clusters (3-net decomposition).
//! * [`design`] — two-stage cluster randomization with individual hole
//!   punching, exact assignment propensities, design enumeration for small
//!   instances, and replicated assignment draws for Monte Carlo work.
//! * [`outcomes`] — post-log ingestion, per-month outcome panels under
//!   configurable hate measures, difference adjustment, eligibility
//!   filtering, keyword ranking.
//! * [`direct`] — Horvitz–Thompson estimation of direct effects with exact
//!   design variances, conservative variance estimation, subgroup and
//!   binary-outcome variants, monthly randomization-inference intervals,
//!   and Wald treatment-on-treated conversion.
//! * [`exposure`] — q-fraction exposure conditions, Monte Carlo exposure
//!   propensities, Hájek (weighted-regression) estimation with
//!   network-dependence sandwich variances.
//! * [`upstream`] — exposure of out-of-sample upstream accounts through
//!   their reposter audiences, randomization-inference tests and test
//!   inversion, reposter-loss outcomes, persistence of indirect effects.
//! * [`persistence`] — post-period persistence of direct effects via
//!   cluster-robust regression.
//! * [`analytics`] — repost-network behavioral summaries (audience renewal,
//!   repost-ordering statistic, audience-composition outcomes, placebo
//!   harness).
//! * [`simlab`] — synthetic generators with known ground truth for
//!   validation studies.
//! * [`validate`] — the self-check battery behind `netx validate`.
//!
//! Numeric kernels in [`linalg`] are generic over any IEEE float via
//! [`scalar::Scalar`]; the pipeline itself works in [`Real`] (`f64`).
//! Every randomized routine takes an explicit seed and derives labeled
//! substreams from it ([`rng`]), so results are reproducible bit-for-bit
//! regardless of thread count.

pub mod analytics;
pub mod design;
pub mod direct;
pub mod error;
pub mod exposure;
pub mod io;
pub mod linalg;
pub mod netgraph;
pub mod outcomes;
pub mod persistence;
pub mod regress;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod simlab;
pub mod upstream;
pub mod validate;

pub use error::{Error, Result};

/// Concrete scalar used by the pipeline types.
pub type Real = f64;

/// Two-sided 97.5% standard-normal quantile used for nominal 95% intervals.
pub const Z975: Real = 1.959_963_984_540_054;
