//! Probabilistic quality scoring for deep-learning mutants.
//!
//! Every original, faulty and mutant model is retrained `n` times and each
//! instance is evaluated on a shared test set. From those hard-label
//! predictions this crate derives:
//!
//! * the binary execution matrix of a variant against its paired originals
//!   ([`killing`]),
//! * per-test killing probabilities (`KP`, exact fractions `k/n`),
//! * intrinsic quality (`IQ`, resistance to killing) and extrinsic quality
//!   (`EQ`, generalized Jaccard overlap with the real fault) ([`quality`]),
//! * canonical configuration families, median-based quadrant labels,
//!   hit-rate selection and held-out validation ([`selection`]).
//!
//! [`synth`] plants known kill profiles into deterministic synthetic logs for
//! end-to-end testing.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallelism
//! and the command-line tool live in the `mutqual` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod domain;
pub mod grouping;
pub mod killing;
pub mod numfmt;
pub mod quality;
pub mod selection;
pub mod synth;

pub use domain::{
    ExecutionMatrix, FamilyStats, KpVector, ModelKind, MutantQuality, PredictionRecord,
    RawRecord, RecordError, SubjectRuns, VariantId,
};
pub use grouping::{group_runs, GroupError, RunsGrouper};
pub use killing::{build_execution_matrix, killing_indicator, killing_probabilities, KillingError};
pub use quality::{
    extrinsic_quality, intrinsic_quality, mean_kill_probability, mutant_coverage, score_subject,
    MutantCoverage, QualityError, SubjectKpSet,
};
pub use selection::{
    canonicalize, compute_thresholds, family_hit_rates, label_quadrant, reduction_ratio,
    select_families, validate_holdout, CanonAction, CanonError, CanonRule, CanonRuleSet,
    Quadrant, QuadrantThresholds, RetentionRule, SelectionError, SelectionReport,
    ValidationReport,
};
