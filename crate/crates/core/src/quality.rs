//! Intrinsic (resistance) and extrinsic (realism) mutant quality.
//!
//! All sums run over integer kill counts in canonical test order, so every
//! score is an exact rational that is rounded to `f64` at the very end.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use thiserror::Error;

use crate::domain::{KpVector, MutantQuality, SubjectRuns, VariantId};
use crate::killing::subject_kp_vectors;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QualityError {
    #[error("subject has no mutants")]
    NoMutants,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("KP vectors of {0} and {1} are defined over different test sets")]
    TestSetMismatch(VariantId, VariantId),
    #[error("KP vectors of {0} and {1} use different run counts")]
    RunCountMismatch(VariantId, VariantId),
}

/// KP vectors of one subject system: its faulty model and all of its mutants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectKpSet {
    pub dataset_id: String,
    pub subject_id: String,
    test_ids: Arc<[String]>,
    kp_fault: Option<KpVector>,
    /// Sorted by configuration id.
    kp_mutants: Vec<KpVector>,
}

impl SubjectKpSet {
    /// Assembles a set, checking that every vector shares the test ids and run count.
    pub fn new(
        dataset_id: impl Into<String>,
        subject_id: impl Into<String>,
        test_ids: Arc<[String]>,
        kp_fault: Option<KpVector>,
        mut kp_mutants: Vec<KpVector>,
    ) -> Result<Self, QualityError> {
        kp_mutants.sort_by(|a, b| a.variant_id().cmp(b.variant_id()));
        let mut all = kp_fault.iter().chain(&kp_mutants);
        if let Some(first) = all.next() {
            if !(Arc::ptr_eq(first.test_ids(), &test_ids) || **first.test_ids() == *test_ids) {
                return Err(QualityError::TestSetMismatch(
                    first.variant_id().clone(),
                    first.variant_id().clone(),
                ));
            }
            for kp in all {
                if !kp.same_tests(first) {
                    return Err(QualityError::TestSetMismatch(
                        first.variant_id().clone(),
                        kp.variant_id().clone(),
                    ));
                }
                if kp.runs() != first.runs() {
                    return Err(QualityError::RunCountMismatch(
                        first.variant_id().clone(),
                        kp.variant_id().clone(),
                    ));
                }
            }
        }
        Ok(SubjectKpSet {
            dataset_id: dataset_id.into(),
            subject_id: subject_id.into(),
            test_ids,
            kp_fault,
            kp_mutants,
        })
    }

    /// Builds execution matrices and KP vectors for every variant of a subject.
    pub fn from_runs(runs: &SubjectRuns) -> Self {
        let (kp_fault, kp_mutants) = subject_kp_vectors(runs);
        SubjectKpSet {
            dataset_id: runs.dataset_id().into(),
            subject_id: runs.subject_id().into(),
            test_ids: runs.test_ids().clone(),
            kp_fault,
            kp_mutants,
        }
    }

    pub fn test_ids(&self) -> &Arc<[String]> {
        &self.test_ids
    }

    pub fn kp_fault(&self) -> Option<&KpVector> {
        self.kp_fault.as_ref()
    }

    pub fn kp_mutants(&self) -> &[KpVector] {
        &self.kp_mutants
    }
}

/// Probabilistic mutant coverage `C_t`: the mean KP of test `t` over the
/// subject's mutants, kept as `Σ_m k_m(t) / (n · |M|)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutantCoverage {
    test_ids: Arc<[String]>,
    runs: u32,
    mutant_count: u64,
    kill_sums: Vec<u64>,
}

impl MutantCoverage {
    pub fn test_ids(&self) -> &Arc<[String]> {
        &self.test_ids
    }

    pub fn mutant_count(&self) -> u64 {
        self.mutant_count
    }

    pub fn len(&self) -> usize {
        self.kill_sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kill_sums.is_empty()
    }

    pub fn value(&self, test: usize) -> f64 {
        self.kill_sums[test] as f64 / (u64::from(self.runs) * self.mutant_count) as f64
    }

    pub fn values(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.kill_sums.len()).map(|t| self.value(t))
    }

    pub fn get(&self, test_id: &str) -> Option<f64> {
        self.test_ids
            .binary_search_by(|t| t.as_str().cmp(test_id))
            .ok()
            .map(|i| self.value(i))
    }
}

/// `C_t` over all mutants of the subject (the scored mutant included).
pub fn mutant_coverage(kps: &SubjectKpSet) -> Result<MutantCoverage, QualityError> {
    let first = kps.kp_mutants.first().ok_or(QualityError::NoMutants)?;
    let mut kill_sums = alloc::vec![0u64; kps.test_ids.len()];
    for kp in &kps.kp_mutants {
        for (sum, &k) in kill_sums.iter_mut().zip(kp.kill_counts()) {
            *sum += u64::from(k);
        }
    }
    Ok(MutantCoverage {
        test_ids: kps.test_ids.clone(),
        runs: first.runs(),
        mutant_count: kps.kp_mutants.len() as u64,
        kill_sums,
    })
}

/// `S_m`: mean killing probability over the test set.
pub fn mean_kill_probability(kp: &KpVector) -> Result<f64, QualityError> {
    if kp.is_empty() {
        return Err(QualityError::EmptyTestSet);
    }
    let denom = u64::from(kp.runs()) * kp.len() as u64;
    Ok(kp.total_kills() as f64 / denom as f64)
}

/// Intrinsic quality:
///
/// ```text
/// IQ = 0                                              if S_m = 0
/// IQ = (1 - S_m) · (1 - Σ_t KP(t)·C_t / Σ_t KP(t))    otherwise
/// ```
///
/// With `KP(t) = k_t/n`, `C_t = K_t/(n|M|)` this is the rational
/// `(n|T| - Σk)(n|M|Σk - Σ k_t K_t) / (n|T| · n|M|Σk)`.
///
/// # Panics
/// If `coverage` is defined over a different number of tests.
pub fn intrinsic_quality(kp: &KpVector, coverage: &MutantCoverage) -> f64 {
    assert_eq!(kp.len(), coverage.len(), "coverage must share the mutant's test set");
    let total: u128 = u128::from(kp.total_kills());
    if total == 0 {
        return 0.0;
    }
    let n = u128::from(kp.runs());
    let weighted: u128 = kp
        .kill_counts()
        .iter()
        .zip(&coverage.kill_sums)
        .map(|(&k, &sum)| u128::from(k) * u128::from(sum))
        .sum();
    let cells = n * kp.len() as u128;
    // Coverage may stem from a different run count than the mutant in hand-built
    // sets; scale by its own normaliser.
    let cov_norm = u128::from(coverage.runs) * u128::from(coverage.mutant_count);
    let resist = cells - total;
    let spread_den = cov_norm * total;
    let spread = spread_den.saturating_sub(weighted);
    match (resist.checked_mul(spread), cells.checked_mul(spread_den)) {
        (Some(num), Some(den)) => num as f64 / den as f64,
        _ => (resist as f64 / cells as f64) * (spread as f64 / spread_den as f64),
    }
}

/// Extrinsic quality: generalized Jaccard similarity of two KP vectors,
/// `Σ min(KP_m, KP_f) / Σ max(KP_m, KP_f)`, defined as 0 when both are all-zero.
pub fn extrinsic_quality(kp_m: &KpVector, kp_f: &KpVector) -> Result<f64, QualityError> {
    if !kp_m.same_tests(kp_f) {
        return Err(QualityError::TestSetMismatch(
            kp_m.variant_id().clone(),
            kp_f.variant_id().clone(),
        ));
    }
    // Cross-multiply so differing run counts stay exact.
    let (nm, nf) = (u64::from(kp_m.runs()), u64::from(kp_f.runs()));
    let (mut lo, mut hi) = (0u128, 0u128);
    for (&a, &b) in kp_m.kill_counts().iter().zip(kp_f.kill_counts()) {
        let (a, b) = (u64::from(a) * nf, u64::from(b) * nm);
        lo += u128::from(a.min(b));
        hi += u128::from(a.max(b));
    }
    if hi == 0 {
        return Ok(0.0);
    }
    Ok(lo as f64 / hi as f64)
}

/// Scores every mutant of a subject. `eq` is `None` when the subject has no
/// faulty model; `family_id` is left empty.
pub fn score_subject(kps: &SubjectKpSet) -> Result<Vec<MutantQuality>, QualityError> {
    if kps.kp_mutants.is_empty() {
        return Ok(Vec::new());
    }
    let coverage = mutant_coverage(kps)?;
    kps.kp_mutants
        .iter()
        .map(|kp| {
            let eq = kps
                .kp_fault
                .as_ref()
                .map(|f| extrinsic_quality(kp, f))
                .transpose()?;
            Ok(MutantQuality {
                dataset_id: kps.dataset_id.clone(),
                subject_id: kps.subject_id.clone(),
                config_id: kp.variant_id().config_id().into(),
                family_id: String::new(),
                s_m: mean_kill_probability(kp)?,
                iq: intrinsic_quality(kp, &coverage),
                eq,
            })
        })
        .collect()
}
