//! Cardinality matching with covariate-balance constraints, optimal
//! re-pairing of the matched sample, and sensitivity analysis for the
//! resulting paired differences.
//!
//! The pipeline runs [`cardmatch::escalate_ratio`] to pick the largest
//! balanced sample, [`pairing::optimal_pairing`] to decide who is paired
//! with whom, [`data::pair_differences`] to form the differences, and the
//! [`sens`] and [`multitest`] routines to bound P-values under
//! unmeasured confounding.

pub mod assignment;
pub mod balance;
pub mod cardmatch;
pub mod data;
pub mod multitest;
pub mod pairing;
pub mod power;
pub mod scalar;
pub mod scores;
pub mod sens;
pub mod solver;
pub mod stats;

pub use balance::{BalanceConstraint, BalanceDecl, BalanceError, BalanceSpec};
pub use cardmatch::{Certificate, MatchError, MatchProblem, MatchSolution, SolverOptions};
pub use data::{DataError, PairDifferences, SchemaSpec, StudyData};
pub use pairing::{DistanceMatrix, HeterogeneityStats, PairedSample, PairingError};
pub use scalar::{Cost, Scalar};
pub use scores::{ScoreVector, StatFamily};
pub use sens::{EstimateInterval, GammaModel, PValueInterval};

/// Double-precision instantiations.
pub type Differences = PairDifferences<f64>;
pub type Scores = ScoreVector<f64>;
pub type Heterogeneity = HeterogeneityStats<f64>;
pub type Estimates = EstimateInterval<f64>;

/// Single-precision instantiations.
pub type DifferencesF32 = PairDifferences<f32>;
pub type ScoresF32 = ScoreVector<f32>;
pub type HeterogeneityF32 = HeterogeneityStats<f32>;
pub type EstimatesF32 = EstimateInterval<f32>;
