//! Core data model shared by every analysis stage.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which kind of model produced a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Original,
    Faulty,
    Mutant,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Original => "original",
            ModelKind::Faulty => "faulty",
            ModelKind::Mutant => "mutant",
        }
    }

    pub fn parse(s: &str) -> Result<Self, RecordError> {
        match s {
            "original" => Ok(ModelKind::Original),
            "faulty" => Ok(ModelKind::Faulty),
            "mutant" => Ok(ModelKind::Mutant),
            other => Err(RecordError::BadModelKind(other.to_string())),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Field-level validation failures of a single prediction record.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("field `model_kind` has unknown value {0:?} (expected original, faulty or mutant)")]
    BadModelKind(String),
    #[error("field `config_id` must be non-empty iff model_kind is mutant (model_kind={kind}, config_id={config_id:?})")]
    ConfigOnNonMutant { kind: ModelKind, config_id: String },
    #[error("field `run_index` must be a positive integer, got {0}")]
    NonPositiveRunIndex(i64),
}

/// A prediction record as it appears on the wire, before validation.
///
/// Field order is the interchange column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub dataset_id: String,
    pub subject_id: String,
    pub model_kind: String,
    pub config_id: String,
    pub run_index: i64,
    pub test_id: String,
    pub true_label: String,
    pub predicted_label: String,
}

impl RawRecord {
    /// Field names in wire order.
    pub const FIELDS: [&'static str; 8] = [
        "dataset_id",
        "subject_id",
        "model_kind",
        "config_id",
        "run_index",
        "test_id",
        "true_label",
        "predicted_label",
    ];

    pub fn into_record(self) -> Result<PredictionRecord, RecordError> {
        let model_kind = ModelKind::parse(&self.model_kind)?;
        let run_index = u32::try_from(self.run_index)
            .ok()
            .filter(|&r| r >= 1)
            .ok_or(RecordError::NonPositiveRunIndex(self.run_index))?;
        let record = PredictionRecord {
            dataset_id: self.dataset_id,
            subject_id: self.subject_id,
            model_kind,
            config_id: self.config_id,
            run_index,
            test_id: self.test_id,
            true_label: self.true_label,
            predicted_label: self.predicted_label,
        };
        validate_record(&record)?;
        Ok(record)
    }
}

/// One hard-label output of one model instance on one test input.
///
/// Labels are opaque strings compared by exact equality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionRecord {
    pub dataset_id: String,
    pub subject_id: String,
    pub model_kind: ModelKind,
    /// Mutation configuration; empty unless `model_kind` is `Mutant`.
    pub config_id: String,
    /// 1-based retraining index; run `i` of a variant pairs with run `i` of the original.
    pub run_index: u32,
    pub test_id: String,
    pub true_label: String,
    pub predicted_label: String,
}

impl PredictionRecord {
    pub fn to_raw(&self) -> RawRecord {
        RawRecord {
            dataset_id: self.dataset_id.clone(),
            subject_id: self.subject_id.clone(),
            model_kind: self.model_kind.as_str().to_string(),
            config_id: self.config_id.clone(),
            run_index: i64::from(self.run_index),
            test_id: self.test_id.clone(),
            true_label: self.true_label.clone(),
            predicted_label: self.predicted_label.clone(),
        }
    }

    /// The uniqueness key `(dataset, subject, kind, config, run, test)`.
    pub fn key(&self) -> RecordKey<'_> {
        RecordKey {
            dataset_id: &self.dataset_id,
            subject_id: &self.subject_id,
            model_kind: self.model_kind,
            config_id: &self.config_id,
            run_index: self.run_index,
            test_id: &self.test_id,
        }
    }
}

/// Borrowed uniqueness key of a [`PredictionRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey<'a> {
    pub dataset_id: &'a str,
    pub subject_id: &'a str,
    pub model_kind: ModelKind,
    pub config_id: &'a str,
    pub run_index: u32,
    pub test_id: &'a str,
}

impl fmt::Display for RecordKey<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {:?}, run {}, {})",
            self.dataset_id,
            self.subject_id,
            self.model_kind,
            self.config_id,
            self.run_index,
            self.test_id
        )
    }
}

/// Checks the field-level invariants of a record.
pub fn validate_record(record: &PredictionRecord) -> Result<(), RecordError> {
    let required = [
        ("dataset_id", &record.dataset_id),
        ("subject_id", &record.subject_id),
        ("test_id", &record.test_id),
        ("true_label", &record.true_label),
        ("predicted_label", &record.predicted_label),
    ];
    if let Some((name, _)) = required.iter().find(|(_, v)| v.is_empty()) {
        return Err(RecordError::EmptyField(name));
    }
    if (record.model_kind == ModelKind::Mutant) == record.config_id.is_empty() {
        return Err(RecordError::ConfigOnNonMutant {
            kind: record.model_kind,
            config_id: record.config_id.clone(),
        });
    }
    if record.run_index == 0 {
        return Err(RecordError::NonPositiveRunIndex(0));
    }
    Ok(())
}

/// A faulty model or a mutant, i.e. anything compared against the originals.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VariantId {
    Faulty,
    Mutant(String),
}

impl VariantId {
    pub fn mutant(config_id: impl Into<String>) -> Self {
        VariantId::Mutant(config_id.into())
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            VariantId::Faulty => ModelKind::Faulty,
            VariantId::Mutant(_) => ModelKind::Mutant,
        }
    }

    /// The record-level `config_id` (empty for the faulty model).
    pub fn config_id(&self) -> &str {
        match self {
            VariantId::Faulty => "",
            VariantId::Mutant(c) => c,
        }
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariantId::Faulty => f.write_str("faulty"),
            VariantId::Mutant(c) => write!(f, "mutant:{c}"),
        }
    }
}

/// Dense `runs × tests` grid of interned label ids, row-major by run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LabelGrid {
    pub(crate) tests: usize,
    pub(crate) cells: Vec<u32>,
}

impl LabelGrid {
    #[inline]
    pub(crate) fn run(&self, run0: usize) -> &[u32] {
        &self.cells[run0 * self.tests..(run0 + 1) * self.tests]
    }
}

/// All paired predictions of one subject system, complete on `test_ids × [1..n]`.
///
/// Built by [`crate::grouping`]; immutable afterwards. Test ids are kept in
/// lexicographic order and labels are interned in lexicographic order, so two
/// groupings of the same records compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectRuns {
    pub(crate) dataset_id: String,
    pub(crate) subject_id: String,
    pub(crate) runs: u32,
    pub(crate) test_ids: Arc<[String]>,
    pub(crate) labels: Vec<String>,
    pub(crate) true_labels: Vec<u32>,
    pub(crate) original: LabelGrid,
    pub(crate) faulty: Option<LabelGrid>,
    pub(crate) mutants: Vec<(String, LabelGrid)>,
}

impl SubjectRuns {
    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    /// Number of paired retraining runs `n`.
    pub fn runs(&self) -> u32 {
        self.runs
    }

    /// Test ids in canonical (lexicographic) order.
    pub fn test_ids(&self) -> &Arc<[String]> {
        &self.test_ids
    }

    pub fn has_faulty(&self) -> bool {
        self.faulty.is_some()
    }

    /// Mutant configuration ids in sorted order.
    pub fn mutant_configs(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        self.mutants.iter().map(|(c, _)| c.as_str())
    }

    /// Every variant present: the faulty model first (if any), then mutants in order.
    pub fn variants(&self) -> Vec<VariantId> {
        let mut out = Vec::with_capacity(self.mutants.len() + 1);
        if self.faulty.is_some() {
            out.push(VariantId::Faulty);
        }
        out.extend(self.mutants.iter().map(|(c, _)| VariantId::Mutant(c.clone())));
        out
    }

    pub fn true_label(&self, test: usize) -> &str {
        &self.labels[self.true_labels[test] as usize]
    }

    /// Prediction of original instance `run` (1-based) on test index `test`.
    pub fn original_label(&self, run: u32, test: usize) -> &str {
        self.label_at(&self.original, run, test)
    }

    /// Prediction of a variant instance, or `None` if the variant is absent.
    pub fn variant_label(&self, variant: &VariantId, run: u32, test: usize) -> Option<&str> {
        self.grid(variant).map(|g| self.label_at(g, run, test))
    }

    fn label_at(&self, grid: &LabelGrid, run: u32, test: usize) -> &str {
        let id = grid.run(run as usize - 1)[test];
        &self.labels[id as usize]
    }

    pub(crate) fn grid(&self, variant: &VariantId) -> Option<&LabelGrid> {
        match variant {
            VariantId::Faulty => self.faulty.as_ref(),
            VariantId::Mutant(c) => self
                .mutants
                .binary_search_by(|(k, _)| k.as_str().cmp(c))
                .ok()
                .map(|i| &self.mutants[i].1),
        }
    }

    /// Total number of prediction cells held (original + variants).
    pub fn cell_count(&self) -> usize {
        let grids = 1 + usize::from(self.faulty.is_some()) + self.mutants.len();
        grids * self.runs as usize * self.test_ids.len()
    }

    /// Expands back into records: originals, then faulty, then mutants by
    /// config; within each, runs ascending and tests in canonical order.
    pub fn to_records(&self) -> Vec<PredictionRecord> {
        let mut out = Vec::with_capacity(self.cell_count());
        let mut emit = |kind: ModelKind, config: &str, grid: &LabelGrid| {
            for run in 1..=self.runs {
                for (t, test_id) in self.test_ids.iter().enumerate() {
                    out.push(PredictionRecord {
                        dataset_id: self.dataset_id.clone(),
                        subject_id: self.subject_id.clone(),
                        model_kind: kind,
                        config_id: config.to_string(),
                        run_index: run,
                        test_id: test_id.clone(),
                        true_label: self.true_label(t).to_string(),
                        predicted_label: self.label_at(grid, run, t).to_string(),
                    });
                }
            }
        };
        emit(ModelKind::Original, "", &self.original);
        if let Some(f) = &self.faulty {
            emit(ModelKind::Faulty, "", f);
        }
        for (c, g) in &self.mutants {
            emit(ModelKind::Mutant, c, g);
        }
        out
    }
}

/// Binary killing indicators of one variant: `|T|` rows × `n` run columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionMatrix {
    variant_id: VariantId,
    test_ids: Arc<[String]>,
    runs: u32,
    cells: Vec<u8>,
}

impl ExecutionMatrix {
    /// Builds a matrix from row-major cells (`cells[t * runs + i]`).
    ///
    /// Returns `None` when the dimensions disagree or a cell is not 0/1.
    pub fn from_cells(
        variant_id: VariantId,
        test_ids: Arc<[String]>,
        runs: u32,
        cells: Vec<u8>,
    ) -> Option<Self> {
        if runs == 0 || cells.len() != test_ids.len() * runs as usize || cells.iter().any(|&c| c > 1)
        {
            return None;
        }
        Some(ExecutionMatrix {
            variant_id,
            test_ids,
            runs,
            cells,
        })
    }

    pub fn variant_id(&self) -> &VariantId {
        &self.variant_id
    }

    pub fn test_ids(&self) -> &Arc<[String]> {
        &self.test_ids
    }

    pub fn runs(&self) -> u32 {
        self.runs
    }

    /// Indicator row of test index `test` (one cell per run).
    pub fn row(&self, test: usize) -> &[u8] {
        let n = self.runs as usize;
        &self.cells[test * n..(test + 1) * n]
    }

    /// Cell for test index `test` and 0-based run column `run0`.
    pub fn cell(&self, test: usize, run0: usize) -> u8 {
        self.row(test)[run0]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.cells.chunks_exact(self.runs as usize)
    }
}

/// Per-test killing probabilities of one variant, stored exactly as `k / n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KpVector {
    variant_id: VariantId,
    test_ids: Arc<[String]>,
    runs: u32,
    kills: Vec<u32>,
}

impl KpVector {
    /// Returns `None` if `runs` is zero, lengths differ, or a count exceeds `runs`.
    pub fn from_counts(
        variant_id: VariantId,
        test_ids: Arc<[String]>,
        runs: u32,
        kills: Vec<u32>,
    ) -> Option<Self> {
        if runs == 0 || kills.len() != test_ids.len() || kills.iter().any(|&k| k > runs) {
            return None;
        }
        Some(KpVector {
            variant_id,
            test_ids,
            runs,
            kills,
        })
    }

    pub fn variant_id(&self) -> &VariantId {
        &self.variant_id
    }

    pub fn test_ids(&self) -> &Arc<[String]> {
        &self.test_ids
    }

    pub fn runs(&self) -> u32 {
        self.runs
    }

    pub fn len(&self) -> usize {
        self.kills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kills.is_empty()
    }

    /// Numerators `k` of `KP(t) = k / n`, in canonical test order.
    pub fn kill_counts(&self) -> &[u32] {
        &self.kills
    }

    pub fn total_kills(&self) -> u64 {
        self.kills.iter().map(|&k| u64::from(k)).sum()
    }

    /// `KP` of test index `test` as a decimal.
    pub fn value(&self, test: usize) -> f64 {
        f64::from(self.kills[test]) / f64::from(self.runs)
    }

    pub fn values(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let n = f64::from(self.runs);
        self.kills.iter().map(move |&k| f64::from(k) / n)
    }

    /// Looks a test up by id.
    pub fn get(&self, test_id: &str) -> Option<f64> {
        self.test_ids
            .binary_search_by(|t| t.as_str().cmp(test_id))
            .ok()
            .map(|i| self.value(i))
    }

    pub(crate) fn same_tests(&self, other: &KpVector) -> bool {
        Arc::ptr_eq(&self.test_ids, &other.test_ids) || self.test_ids == other.test_ids
    }
}

/// Quality scores of one mutant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutantQuality {
    pub dataset_id: String,
    pub subject_id: String,
    pub config_id: String,
    /// Canonical configuration family; empty until canonicalized.
    pub family_id: String,
    /// Mean killing probability over the test set.
    pub s_m: f64,
    pub iq: f64,
    /// Absent when the subject has no faulty model.
    pub eq: Option<f64>,
}

impl MutantQuality {
    /// Operator id: the leading `_`-separated token of the configuration.
    pub fn operator_id(&self) -> &str {
        self.config_id.split('_').next().unwrap_or("")
    }
}

/// High-High statistics of one canonical configuration family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub family_id: String,
    pub mutant_count: u64,
    pub high_high_count: u64,
    pub hit_rate: f64,
}

impl FamilyStats {
    /// # Panics
    /// If `mutant_count` is zero or smaller than `high_high_count`.
    pub fn new(family_id: impl Into<String>, mutant_count: u64, high_high_count: u64) -> Self {
        assert!(mutant_count >= 1 && high_high_count <= mutant_count);
        FamilyStats {
            family_id: family_id.into(),
            mutant_count,
            high_high_count,
            hit_rate: high_high_count as f64 / mutant_count as f64,
        }
    }
}
