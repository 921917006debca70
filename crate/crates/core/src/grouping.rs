//! Grouping validated prediction records into complete per-subject run grids.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::borrow::Borrow;

use thiserror::Error;

use crate::domain::{LabelGrid, ModelKind, PredictionRecord, SubjectRuns};

const MISSING: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("duplicate record key {0}")]
    DuplicateKey(String),
    #[error("subject {subject}: run index {run} exceeds the declared run count {declared}")]
    RunOutOfRange {
        subject: String,
        run: u32,
        declared: u32,
    },
    #[error("subject {subject}: original model has no run {run}")]
    MissingOriginalRun { subject: String, run: u32 },
    #[error("subject {subject}, {variant}: test set mismatch: {detail}")]
    TestSetMismatch {
        subject: String,
        variant: String,
        detail: String,
    },
    #[error("subject {subject}, {variant}: incomplete grid: {detail}")]
    IncompleteGrid {
        subject: String,
        variant: String,
        detail: String,
    },
    #[error("subject {subject}: test {test_id} has conflicting true labels {first:?} and {second:?}")]
    TrueLabelConflict {
        subject: String,
        test_id: String,
        first: String,
        second: String,
    },
}

#[derive(Debug)]
struct VariantAcc {
    kind: ModelKind,
    config: String,
    /// `runs[r - 1][discovery index]`, `MISSING` where absent.
    runs: Vec<Vec<u32>>,
}

impl VariantAcc {
    fn display(&self) -> String {
        match self.kind {
            ModelKind::Mutant => format!("mutant:{}", self.config),
            k => k.as_str().to_string(),
        }
    }

    fn covers(&self, test: usize) -> bool {
        self.runs.iter().any(|r| r.get(test).is_some_and(|&c| c != MISSING))
    }
}

#[derive(Debug)]
struct SubjectAcc {
    dataset_id: String,
    subject_id: String,
    test_index: BTreeMap<String, u32>,
    test_names: Vec<String>,
    true_labels: Vec<u32>,
    label_index: BTreeMap<String, u32>,
    label_names: Vec<String>,
    variant_index: BTreeMap<(ModelKind, String), usize>,
    variants: Vec<VariantAcc>,
    last_variant: usize,
    last_test: usize,
}

impl SubjectAcc {
    fn new(dataset_id: &str, subject_id: &str) -> Self {
        SubjectAcc {
            dataset_id: dataset_id.to_string(),
            subject_id: subject_id.to_string(),
            test_index: BTreeMap::new(),
            test_names: Vec::new(),
            true_labels: Vec::new(),
            label_index: BTreeMap::new(),
            label_names: Vec::new(),
            variant_index: BTreeMap::new(),
            variants: Vec::new(),
            last_variant: usize::MAX,
            last_test: usize::MAX,
        }
    }

    fn name(&self) -> String {
        format!("{}/{}", self.dataset_id, self.subject_id)
    }

    fn intern_label(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.label_index.get(label) {
            return id;
        }
        let id = self.label_names.len() as u32;
        self.label_names.push(label.to_string());
        self.label_index.insert(label.to_string(), id);
        id
    }

    fn test_slot(&mut self, test_id: &str) -> usize {
        // Logs are usually written test-after-test; try the neighbours first.
        let guess = self.last_test.wrapping_add(1);
        for g in [guess, 0] {
            if self.test_names.get(g).is_some_and(|n| n == test_id) {
                self.last_test = g;
                return g;
            }
        }
        let slot = match self.test_index.get(test_id) {
            Some(&i) => i as usize,
            None => {
                let i = self.test_names.len();
                self.test_names.push(test_id.to_string());
                self.test_index.insert(test_id.to_string(), i as u32);
                self.true_labels.push(MISSING);
                i
            }
        };
        self.last_test = slot;
        slot
    }

    fn variant_slot(&mut self, kind: ModelKind, config: &str) -> usize {
        if let Some(v) = self.variants.get(self.last_variant) {
            if v.kind == kind && v.config == config {
                return self.last_variant;
            }
        }
        let key = (kind, config.to_string());
        let slot = match self.variant_index.get(&key) {
            Some(&i) => i,
            None => {
                let i = self.variants.len();
                self.variants.push(VariantAcc {
                    kind,
                    config: key.1.clone(),
                    runs: Vec::new(),
                });
                self.variant_index.insert(key, i);
                i
            }
        };
        self.last_variant = slot;
        slot
    }
}

/// Incremental builder behind [`group_runs`].
///
/// Records may arrive in any order; duplicates are rejected on insertion and
/// grid completeness is checked by [`RunsGrouper::finish`].
#[derive(Debug, Default)]
pub struct RunsGrouper {
    declared_runs: Option<u32>,
    index: BTreeMap<String, BTreeMap<String, usize>>,
    subjects: Vec<SubjectAcc>,
    last_subject: usize,
}

impl RunsGrouper {
    pub fn new() -> Self {
        RunsGrouper {
            last_subject: usize::MAX,
            ..Default::default()
        }
    }

    /// Fixes `n` up front instead of inferring it from the largest run index.
    pub fn with_declared_runs(runs: u32) -> Self {
        RunsGrouper {
            declared_runs: Some(runs),
            ..Self::new()
        }
    }

    fn subject_slot(&mut self, dataset_id: &str, subject_id: &str) -> usize {
        if let Some(s) = self.subjects.get(self.last_subject) {
            if s.dataset_id == dataset_id && s.subject_id == subject_id {
                return self.last_subject;
            }
        }
        let by_subject = match self.index.get_mut(dataset_id) {
            Some(m) => m,
            None => self.index.entry(dataset_id.to_string()).or_default(),
        };
        let slot = match by_subject.get(subject_id) {
            Some(&i) => i,
            None => {
                let i = self.subjects.len();
                by_subject.insert(subject_id.to_string(), i);
                self.subjects.push(SubjectAcc::new(dataset_id, subject_id));
                i
            }
        };
        self.last_subject = slot;
        slot
    }

    /// Adds one validated record.
    pub fn push(&mut self, record: &PredictionRecord) -> Result<(), GroupError> {
        let s = self.subject_slot(&record.dataset_id, &record.subject_id);
        let acc = &mut self.subjects[s];
        if let Some(declared) = self.declared_runs {
            if record.run_index > declared {
                return Err(GroupError::RunOutOfRange {
                    subject: acc.name(),
                    run: record.run_index,
                    declared,
                });
            }
        }
        let t = acc.test_slot(&record.test_id);
        let truth = acc.intern_label(&record.true_label);
        match acc.true_labels[t] {
            MISSING => acc.true_labels[t] = truth,
            prev if prev != truth => {
                return Err(GroupError::TrueLabelConflict {
                    subject: acc.name(),
                    test_id: record.test_id.clone(),
                    first: acc.label_names[prev as usize].clone(),
                    second: record.true_label.clone(),
                })
            }
            _ => {}
        }
        let predicted = acc.intern_label(&record.predicted_label);
        let v = acc.variant_slot(record.model_kind, &record.config_id);
        let tests = acc.test_names.len();
        let runs = &mut acc.variants[v].runs;
        let r = record.run_index as usize - 1;
        if runs.len() <= r {
            runs.resize_with(r + 1, Vec::new);
        }
        let row = &mut runs[r];
        if row.len() < tests {
            row.resize(tests, MISSING);
        }
        if row[t] != MISSING {
            return Err(GroupError::DuplicateKey(record.key().to_string()));
        }
        row[t] = predicted;
        Ok(())
    }

    /// Checks completeness and produces one [`SubjectRuns`] per `(dataset, subject)`.
    pub fn finish(self) -> Result<BTreeMap<(String, String), SubjectRuns>, GroupError> {
        let declared = self.declared_runs;
        let mut subjects = self.subjects;
        let mut order: Vec<usize> = (0..subjects.len()).collect();
        order.sort_by(|&a, &b| {
            (&subjects[a].dataset_id, &subjects[a].subject_id)
                .cmp(&(&subjects[b].dataset_id, &subjects[b].subject_id))
        });
        let mut out = BTreeMap::new();
        for i in order {
            let acc = core::mem::replace(&mut subjects[i], SubjectAcc::new("", ""));
            let runs = finish_subject(acc, declared)?;
            out.insert(
                (runs.dataset_id.clone(), runs.subject_id.clone()),
                runs,
            );
        }
        Ok(out)
    }
}

fn finish_subject(acc: SubjectAcc, declared: Option<u32>) -> Result<SubjectRuns, GroupError> {
    let subject = acc.name();
    let n = declared
        .unwrap_or_else(|| acc.variants.iter().map(|v| v.runs.len()).max().unwrap_or(0) as u32);

    let mut order: Vec<usize> = (0..acc.variants.len()).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (&acc.variants[a], &acc.variants[b]);
        (va.kind, &va.config).cmp(&(vb.kind, &vb.config))
    });
    let original = match order.first().map(|&i| &acc.variants[i]) {
        Some(v) if v.kind == ModelKind::Original => v,
        _ => return Err(GroupError::MissingOriginalRun { subject, run: 1 }),
    };
    for run in 1..=n {
        let present = original
            .runs
            .get(run as usize - 1)
            .is_some_and(|r| r.iter().any(|&c| c != MISSING));
        if !present {
            return Err(GroupError::MissingOriginalRun { subject, run });
        }
    }

    let tests = acc.test_names.len();
    let in_test_set: Vec<bool> = (0..tests).map(|t| original.covers(t)).collect();
    // Report test ids in canonical order so the error does not depend on input order.
    let mut sorted_tests: Vec<usize> = (0..tests).collect();
    sorted_tests.sort_by(|&a, &b| acc.test_names[a].cmp(&acc.test_names[b]));

    for &vi in &order {
        let v = &acc.variants[vi];
        if v.kind != ModelKind::Original {
            if let Some(&t) = sorted_tests.iter().find(|&&t| !in_test_set[t] && v.covers(t)) {
                return Err(GroupError::TestSetMismatch {
                    subject,
                    variant: v.display(),
                    detail: format!("extra test_id {:?} not evaluated on the original model", acc.test_names[t]),
                });
            }
            if let Some(&t) = sorted_tests.iter().find(|&&t| in_test_set[t] && !v.covers(t)) {
                return Err(GroupError::TestSetMismatch {
                    subject,
                    variant: v.display(),
                    detail: format!("missing test_id {:?}", acc.test_names[t]),
                });
            }
        }
        for run in 1..=n {
            let row = v.runs.get(run as usize - 1);
            let Some(row) = row.filter(|r| r.iter().any(|&c| c != MISSING)) else {
                return Err(GroupError::IncompleteGrid {
                    subject,
                    variant: v.display(),
                    detail: format!("run {run} is missing"),
                });
            };
            if let Some(&t) = sorted_tests
                .iter()
                .find(|&&t| in_test_set[t] && row.get(t).is_none_or(|&c| c == MISSING))
            {
                return Err(GroupError::IncompleteGrid {
                    subject,
                    variant: v.display(),
                    detail: format!("run {run} lacks test_id {:?}", acc.test_names[t]),
                });
            }
        }
    }

    // Canonical relabelling: tests and labels in lexicographic order.
    let kept: Vec<usize> = sorted_tests.into_iter().filter(|&t| in_test_set[t]).collect();
    let mut label_order: Vec<usize> = (0..acc.label_names.len()).collect();
    label_order.sort_by(|&a, &b| acc.label_names[a].cmp(&acc.label_names[b]));
    let mut remap = vec![0u32; acc.label_names.len()];
    for (new, &old) in label_order.iter().enumerate() {
        remap[old] = new as u32;
    }
    let labels: Vec<String> = label_order.iter().map(|&i| acc.label_names[i].clone()).collect();

    let build = |v: &VariantAcc| -> LabelGrid {
        let mut cells = Vec::with_capacity(n as usize * kept.len());
        for r in 0..n as usize {
            let row = &v.runs[r];
            cells.extend(kept.iter().map(|&t| remap[row[t] as usize]));
        }
        LabelGrid {
            tests: kept.len(),
            cells,
        }
    };

    let mut faulty = None;
    let mut mutants = Vec::new();
    for &vi in &order[1..] {
        let v = &acc.variants[vi];
        match v.kind {
            ModelKind::Faulty => faulty = Some(build(v)),
            ModelKind::Mutant => mutants.push((v.config.clone(), build(v))),
            ModelKind::Original => unreachable!("only one original variant per subject"),
        }
    }
    let test_ids: Arc<[String]> = kept.iter().map(|&t| acc.test_names[t].clone()).collect();
    Ok(SubjectRuns {
        true_labels: kept.iter().map(|&t| remap[acc.true_labels[t] as usize]).collect(),
        original: build(original),
        dataset_id: acc.dataset_id,
        subject_id: acc.subject_id,
        runs: n,
        test_ids,
        labels,
        faulty,
        mutants,
    })
}

/// Groups records into complete [`SubjectRuns`] keyed by `(dataset_id, subject_id)`.
///
/// Every variant of a subject must cover exactly the original's test set on
/// every run `1..=n`, where `n` is the largest run index seen in the subject.
pub fn group_runs<I>(records: I) -> Result<BTreeMap<(String, String), SubjectRuns>, GroupError>
where
    I: IntoIterator,
    I::Item: Borrow<PredictionRecord>,
{
    let mut grouper = RunsGrouper::new();
    for r in records {
        grouper.push(r.borrow())?;
    }
    grouper.finish()
}
