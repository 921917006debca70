//! Execution matrices and killing probabilities.

use alloc::vec::Vec;

use thiserror::Error;

use crate::domain::{ExecutionMatrix, KpVector, SubjectRuns, VariantId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KillingError {
    #[error("unknown variant {0}")]
    UnknownVariant(VariantId),
}

/// A test kills a variant instance iff the paired original instance gets it
/// right and the variant gets it wrong.
#[inline]
pub fn killing_indicator<L: PartialEq + ?Sized>(orig_pred: &L, variant_pred: &L, true_label: &L) -> u8 {
    u8::from(orig_pred == true_label && variant_pred != true_label)
}

/// Evaluates the killing indicator of every `(test, run)` cell of a variant,
/// pairing variant run `i` with original run `i`.
pub fn build_execution_matrix(
    runs: &SubjectRuns,
    variant: &VariantId,
) -> Result<ExecutionMatrix, KillingError> {
    let grid = runs
        .grid(variant)
        .ok_or_else(|| KillingError::UnknownVariant(variant.clone()))?;
    let n = runs.runs as usize;
    let tests = runs.test_ids.len();
    let mut cells = alloc::vec![0u8; tests * n];
    for r in 0..n {
        let orig = runs.original.run(r);
        let var = grid.run(r);
        for (t, ((o, v), y)) in orig.iter().zip(var).zip(&runs.true_labels).enumerate() {
            cells[t * n + r] = killing_indicator(o, v, y);
        }
    }
    Ok(ExecutionMatrix::from_cells(variant.clone(), runs.test_ids.clone(), runs.runs, cells)
        .expect("dimensions follow from a complete grid"))
}

/// `KP(t) = (1/n) Σ_i KI(t, i)`, kept as the exact count of killing runs.
pub fn killing_probabilities(matrix: &ExecutionMatrix) -> KpVector {
    let kills: Vec<u32> = matrix
        .rows()
        .map(|row| row.iter().map(|&c| u32::from(c)).sum())
        .collect();
    KpVector::from_counts(
        matrix.variant_id().clone(),
        matrix.test_ids().clone(),
        matrix.runs(),
        kills,
    )
    .expect("row sums never exceed the run count")
}

/// KP vectors of the faulty model (if present) and every mutant of a subject.
pub fn subject_kp_vectors(runs: &SubjectRuns) -> (Option<KpVector>, Vec<KpVector>) {
    let kp = |v: &VariantId| {
        killing_probabilities(&build_execution_matrix(runs, v).expect("variant listed by subject"))
    };
    let fault = runs.has_faulty().then(|| kp(&VariantId::Faulty));
    let mutants = runs
        .mutant_configs()
        .map(|c| kp(&VariantId::mutant(c)))
        .collect();
    (fault, mutants)
}
