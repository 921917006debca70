//! In-process composition of the analysis stages, parallel per subject.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use mutqual_core::domain::{ExecutionMatrix, MutantQuality, PredictionRecord, SubjectRuns, VariantId};
use mutqual_core::grouping::{group_runs, RunsGrouper};
use mutqual_core::killing::{build_execution_matrix, killing_probabilities};
use mutqual_core::quality::{score_subject, SubjectKpSet};
use mutqual_core::selection::{
    assign_families, run_selection, CanonRule, CanonRuleSet, RetentionRule, SelectionReport,
};
use mutqual_core::synth::{for_each_subject_record, ScenarioSpec, SubjectSpec};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::table::quantized;

#[derive(Debug, Clone, Copy)]
pub struct AnalyzeOptions<'a> {
    pub rules: &'a CanonRuleSet,
    /// Worker threads; output order does not depend on it.
    pub jobs: usize,
    pub dump_matrices: Option<&'a Path>,
}

impl<'a> AnalyzeOptions<'a> {
    pub fn new(rules: &'a CanonRuleSet) -> Self {
        AnalyzeOptions {
            rules,
            jobs: 1,
            dump_matrices: None,
        }
    }

    pub fn jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    pub fn dump_matrices(mut self, dir: Option<&'a Path>) -> Self {
        self.dump_matrices = dir;
        self
    }
}

/// Runs `f` on a dedicated pool with `jobs` threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

/// File-name-safe rendering of an identifier.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-._".contains(c) { c } else { '_' })
        .collect()
}

fn matrix_csv(m: &ExecutionMatrix) -> String {
    let mut out = String::from("test_id");
    for r in 1..=m.runs() {
        let _ = write!(out, ",run_{r}");
    }
    out.push('\n');
    for (test_id, row) in m.test_ids().iter().zip(m.rows()) {
        out.push_str(test_id);
        for c in row {
            out.push(',');
            out.push(if *c == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

fn dump_path(dir: &Path, runs: &SubjectRuns, variant: &VariantId) -> std::path::PathBuf {
    let v = match variant {
        VariantId::Faulty => "faulty".to_string(),
        VariantId::Mutant(c) => format!("mutant_{c}"),
    };
    dir.join(format!(
        "{}__{}__{}.csv",
        sanitize(runs.dataset_id()),
        sanitize(runs.subject_id()),
        sanitize(&v)
    ))
}

fn kp_set_with_dump(runs: &SubjectRuns, dir: &Path) -> Result<SubjectKpSet> {
    let mut fault = None;
    let mut mutants = Vec::new();
    for variant in runs.variants() {
        let m = build_execution_matrix(runs, &variant).expect("variant listed by subject");
        let path = dump_path(dir, runs, &variant);
        std::fs::write(&path, matrix_csv(&m)).map_err(Error::io(&path))?;
        let kp = killing_probabilities(&m);
        match variant {
            VariantId::Faulty => fault = Some(kp),
            VariantId::Mutant(_) => mutants.push(kp),
        }
    }
    Ok(SubjectKpSet::new(
        runs.dataset_id(),
        runs.subject_id(),
        runs.test_ids().clone(),
        fault,
        mutants,
    )?)
}

/// Scores every mutant of one subject and assigns canonical families.
pub fn analyze_subject(
    runs: &SubjectRuns,
    rules: &CanonRuleSet,
    dump_matrices: Option<&Path>,
) -> Result<Vec<MutantQuality>> {
    let kps = match dump_matrices {
        Some(dir) => kp_set_with_dump(runs, dir)?,
        None => SubjectKpSet::from_runs(runs),
    };
    let mut qualities = score_subject(&kps)?;
    assign_families(&mut qualities, rules)?;
    Ok(qualities)
}

/// Scores grouped subjects in `(dataset, subject, config)` order.
pub fn analyze_grouped(
    grouped: &BTreeMap<(String, String), SubjectRuns>,
    opts: AnalyzeOptions<'_>,
) -> Result<Vec<MutantQuality>> {
    if let Some(dir) = opts.dump_matrices {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let subjects: Vec<&SubjectRuns> = grouped.values().collect();
    let per_subject: Vec<Result<Vec<MutantQuality>>> = with_jobs(opts.jobs, || {
        subjects
            .par_iter()
            .map(|runs| analyze_subject(runs, opts.rules, opts.dump_matrices))
            .collect()
    });
    let mut out = Vec::new();
    for r in per_subject {
        out.extend(r?);
    }
    Ok(out)
}

pub fn analyze_records(records: &[PredictionRecord], opts: AnalyzeOptions<'_>) -> Result<Vec<MutantQuality>> {
    let grouped = group_runs(records)?;
    analyze_grouped(&grouped, opts)
}

fn analyze_synthetic_subject(
    seed: u64,
    dataset_id: &str,
    subject: &SubjectSpec,
    rules: &CanonRuleSet,
) -> Result<Vec<MutantQuality>> {
    let mut grouper = RunsGrouper::new();
    let mut failure = None;
    for_each_subject_record(seed, dataset_id, subject, |r| {
        if failure.is_none() {
            if let Err(e) = grouper.push(r) {
                failure = Some(e);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    let grouped = grouper.finish()?;
    let mut out = Vec::new();
    for runs in grouped.values() {
        out.extend(analyze_subject(runs, rules, None)?);
    }
    Ok(out)
}

/// Generates and analyzes a synthetic scenario one subject at a time, so
/// memory stays bounded by the largest subject.
pub fn analyze_scenario(spec: &ScenarioSpec, opts: AnalyzeOptions<'_>) -> Result<Vec<MutantQuality>> {
    spec.validate()?;
    let mut subjects: Vec<(&str, &SubjectSpec)> = spec
        .datasets
        .iter()
        .flat_map(|d| d.subjects.iter().map(move |s| (d.dataset_id.as_str(), s)))
        .collect();
    subjects.sort_by(|a, b| (a.0, &a.1.subject_id).cmp(&(b.0, &b.1.subject_id)));
    let per_subject: Vec<Result<Vec<MutantQuality>>> = with_jobs(opts.jobs, || {
        subjects
            .par_iter()
            .map(|(d, s)| analyze_synthetic_subject(spec.seed, d, s, opts.rules))
            .collect()
    });
    let mut out = Vec::new();
    for r in per_subject {
        out.extend(r?);
    }
    Ok(out)
}

/// Selection over qualities exactly as a quality table would store them, so
/// the result equals `select` run on the table `analyze` writes.
pub fn select_stored(
    qualities: &[MutantQuality],
    tau: f64,
    rule: RetentionRule,
) -> Result<SelectionReport> {
    Ok(run_selection(&quantized(qualities), tau, rule)?)
}

/// Analysis and selection in one pass.
pub fn analyze_and_select(
    records: &[PredictionRecord],
    opts: AnalyzeOptions<'_>,
    tau: f64,
    rule: RetentionRule,
) -> Result<(Vec<MutantQuality>, SelectionReport)> {
    let qualities = analyze_records(records, opts)?;
    let report = select_stored(&qualities, tau, rule)?;
    Ok((qualities, report))
}

/// Reads canonicalization rules, one JSON object per line; blank lines are skipped.
pub fn parse_rules(text: &str, origin: &Path) -> Result<CanonRuleSet> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rule: CanonRule = serde_json::from_str(line)
            .map_err(|e| Error::bad_file(origin, format!("line {}: {e}", i + 1)))?;
        rules.push(rule);
    }
    Ok(CanonRuleSet::new(rules)?)
}

pub fn read_rules_file(path: &Path) -> Result<CanonRuleSet> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse_rules(&text, path)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use mutqual_core::synth::{records, DatasetSpec, FamilySpec, KillProfile};

    fn spec() -> ScenarioSpec {
        let family = |id: &str, p: f64, w: f64| FamilySpec {
            family_id: id.into(),
            configs_per_family: 2,
            kill_profile: KillProfile::Constant(p),
            correlation_with_fault: w,
        };
        ScenarioSpec {
            seed: 9,
            datasets: vec![DatasetSpec {
                dataset_id: "d".into(),
                subjects: ["b", "a"]
                    .iter()
                    .map(|s| SubjectSpec {
                        subject_id: s.to_string(),
                        n_runs: 3,
                        n_tests: 12,
                        fault_kill_profile: Some(KillProfile::Constant(0.4)),
                        families: vec![family("ARM", 0.3, 0.5), family("TRD_pct_5_15", 0.6, 0.0)],
                    })
                    .collect(),
            }],
        }
    }

    #[test]
    fn streaming_equals_record_path() {
        let rules = CanonRuleSet::default_rules();
        let opts = AnalyzeOptions::new(&rules);
        let via_records = analyze_records(&records(&spec()).unwrap(), opts).unwrap();
        let streamed = analyze_scenario(&spec(), opts.jobs(3)).unwrap();
        assert_eq!(via_records, streamed);
        assert_eq!(via_records.len(), 8);
        assert_eq!(via_records[0].subject_id, "a");
        assert_eq!(via_records[0].family_id, "ARM");
        assert_eq!(via_records[2].family_id, "TRD_pct_5_15");
    }

    #[test]
    fn matrix_dump_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rules = CanonRuleSet::default_rules();
        let recs = records(&spec()).unwrap();
        let plain = analyze_records(&recs, AnalyzeOptions::new(&rules)).unwrap();
        let dumped =
            analyze_records(&recs, AnalyzeOptions::new(&rules).dump_matrices(Some(dir.path()))).unwrap();
        assert_eq!(plain, dumped);
        let text = std::fs::read_to_string(dir.path().join("d__a__faulty.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("test_id,run_1,run_2,run_3"));
        assert_eq!(lines.count(), 12);
        assert!(dir.path().join("d__b__mutant_ARM_layer_2.csv").exists());
    }

    #[test]
    fn rules_file_parses_and_validates() {
        let text = "{\"prefix\":\"ARM\",\"action\":\"strip_layer_index\"}\n\n";
        let rules = parse_rules(text, Path::new("r")).unwrap();
        assert_eq!(rules.rules().len(), 1);
        assert!(parse_rules("{\"prefix\":\"ARM\"}", Path::new("r")).is_err());
        assert!(parse_rules("not json", Path::new("r")).is_err());
    }

    #[test]
    fn sanitize_replaces_separators() {
        assert_eq!(sanitize("a/b c"), "a_b_c");
        assert_eq!(sanitize("TRD_pct_5.5"), "TRD_pct_5.5");
    }
}
