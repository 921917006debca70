use std::path::Path;
use std::process::{Command, Output};

use mutqual::ingest::{parse_log_file, LogFormat, LogSource};
use mutqual::pipeline::{analyze_and_select, to_json, AnalyzeOptions};
use mutqual::table::quality_csv_bytes;
use mutqual_core::selection::{CanonRuleSet, RetentionRule};
use mutqual_core::synth::{DatasetSpec, FamilySpec, KillProfile, ScenarioSpec, SubjectSpec};

fn mutqual(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mutqual")).args(args).output().expect("binary runs")
}

fn spec(seed: u64) -> ScenarioSpec {
    let family = |id: &str, p: f64, w: f64| FamilySpec {
        family_id: id.into(),
        configs_per_family: 3,
        kill_profile: KillProfile::Constant(p),
        correlation_with_fault: w,
    };
    ScenarioSpec {
        seed,
        datasets: ["a", "b"]
            .iter()
            .map(|d| DatasetSpec {
                dataset_id: d.to_string(),
                subjects: (0..2)
                    .map(|s| SubjectSpec {
                        subject_id: format!("s{s}"),
                        n_runs: 4,
                        n_tests: 15,
                        fault_kill_profile: Some(KillProfile::Constant(0.3)),
                        families: vec![family("ARM", 0.2, 0.8), family("TRD_pct_8", 0.7, 0.0), family("VRM", 0.05, 0.3)],
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn synth_log(dir: &Path, name: &str, seed: u64) -> String {
    let spec_path = dir.join(format!("{name}.json"));
    std::fs::write(&spec_path, to_json(&spec(seed))).unwrap();
    let log = dir.join(format!("{name}.jsonl"));
    let out = mutqual(&["synth", "--spec", spec_path.to_str().unwrap(), "--out", log.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    log.to_string_lossy().into_owned()
}

#[test]
fn analyze_then_select_equals_fused_run() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth_log(dir.path(), "sel", 3);
    let q = dir.path().join("q.csv");
    let sel = dir.path().join("sel.json");
    assert!(mutqual(&["analyze", "--in", &log, "--out", q.to_str().unwrap()]).status.success());
    assert!(mutqual(&["select", "--in", q.to_str().unwrap(), "--tau", "0.25", "--out", sel.to_str().unwrap()])
        .status
        .success());

    let records = parse_log_file(&LogSource::new(&log, LogFormat::Jsonl)).unwrap();
    let rules = CanonRuleSet::default_rules();
    let (qualities, report) =
        analyze_and_select(&records, AnalyzeOptions::new(&rules), 0.25, RetentionRule::AtLeast).unwrap();
    assert_eq!(std::fs::read(&q).unwrap(), quality_csv_bytes(&qualities));
    assert_eq!(std::fs::read_to_string(&sel).unwrap(), to_json(&report));
    assert_eq!(report.families_total, 3);
}

#[test]
fn strict_exceeds_changes_retention_rule() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth_log(dir.path(), "sel", 4);
    let q = dir.path().join("q.csv");
    let sel = dir.path().join("sel.json");
    assert!(mutqual(&["analyze", "--in", &log, "--out", q.to_str().unwrap()]).status.success());
    let out = mutqual(&["select", "--in", q.to_str().unwrap(), "--strict-exceeds", "--out", sel.to_str().unwrap()]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sel).unwrap()).unwrap();
    assert_eq!(json["retention"], "exceeds");
    assert_eq!(json["tau"], 0.25);
}

#[test]
fn holdout_and_report_run_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let sel_log = synth_log(dir.path(), "sel", 5);
    let hold_log = synth_log(dir.path(), "hold", 6);
    for (log, q) in [(&sel_log, "q_sel.csv"), (&hold_log, "q_hold.csv")] {
        assert!(mutqual(&["analyze", "--in", log, "--out", &p(q)]).status.success());
    }
    assert!(mutqual(&["select", "--in", &p("q_sel.csv"), "--out", &p("sel.json")]).status.success());
    let out = mutqual(&["holdout", "--in", &p("q_hold.csv"), "--selection", &p("sel.json"), "--out", &p("val.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("val.json")).unwrap()).unwrap();
    for field in ["mutants_before", "mutants_after", "reduction_ratio", "hh_before", "hh_after", "relative_changes"] {
        assert!(v.get(field).is_some(), "missing {field}");
    }
    assert_eq!(v["mutants_before"], 36);

    assert!(mutqual(&["report", "--in", &p("q_sel.csv"), "--selection", &p("sel.json"), "--out", &p("fig")]).status.success());
    let mut names: Vec<String> = std::fs::read_dir(p("fig"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "box_eq_a.svg",
            "box_eq_b.svg",
            "box_iq_a.svg",
            "box_iq_b.svg",
            "quadrant_a.svg",
            "quadrant_b.svg",
            "relative_change.svg",
            "retained_by_tau.svg"
        ]
    );
}

#[test]
fn csv_logs_and_multiple_inputs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    std::fs::write(p("spec.json"), to_json(&spec(1))).unwrap();
    assert!(mutqual(&["synth", "--spec", &p("spec.json"), "--format", "csv", "--out", &p("log.csv")]).status.success());
    assert!(mutqual(&["synth", "--spec", &p("spec.json"), "--out", &p("log.jsonl")]).status.success());
    assert!(mutqual(&["analyze", "--in", &p("log.csv"), "--format", "csv", "--out", &p("a.csv")]).status.success());
    assert!(mutqual(&["analyze", "--in", &p("log.jsonl"), "--out", &p("b.csv")]).status.success());
    assert_eq!(std::fs::read(p("a.csv")).unwrap(), std::fs::read(p("b.csv")).unwrap());

    // The same log twice is a cross-file duplicate.
    let out = mutqual(&["validate", "--in", &p("log.jsonl"), "--in", &p("log.jsonl")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));

    let out = mutqual(&["validate", "--in", &p("log.jsonl")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok: 4 subjects, 36 mutants");
}

#[test]
fn declared_runs_reject_extra_run_indices() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth_log(dir.path(), "s", 2);
    let out = mutqual(&["validate", "--in", &log, "--runs", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(mutqual(&["validate", "--in", &log, "--runs", "4"]).status.success());
}

#[test]
fn custom_rules_file_drives_families() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth_log(dir.path(), "s", 2);
    let rules = dir.path().join("rules.jsonl");
    std::fs::write(
        &rules,
        "{\"prefix\":\"ARM\",\"action\":\"toggle_only\"}\n\
         {\"prefix\":\"TRD\",\"action\":\"bucket_percentage\",\"edges\":[0,10,100]}\n\
         {\"prefix\":\"VRM\",\"action\":\"toggle_only\"}\n",
    )
    .unwrap();
    let q = dir.path().join("q.csv");
    let out = mutqual(&["analyze", "--in", &log, "--rules", rules.to_str().unwrap(), "--out", q.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&q).unwrap();
    assert!(text.contains(",TRD_pct_0_10,"));

    std::fs::write(&rules, "{\"prefix\":\"ARM\",\"action\":\"toggle_only\"}\n").unwrap();
    let out = mutqual(&["analyze", "--in", &log, "--rules", rules.to_str().unwrap(), "--out", q.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("TRD_pct_8"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mutqual(&["analyze", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--bogus") && err.contains("Usage"), "{err}");
    assert_eq!(mutqual(&[]).status.code(), Some(2));
    assert_eq!(mutqual(&["select", "--in", "q.csv", "--out", "o.json", "--jobs", "2"]).status.code(), Some(2));
}

#[test]
fn version_and_help_succeed() {
    let out = mutqual(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(mutqual(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = mutqual(&["analyze", "--in", missing.to_str().unwrap(), "--out", "q.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"dataset_id\":\"d\"}\n").unwrap();
    let out = mutqual(&["validate", "--in", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let q = dir.path().join("q.csv");
    std::fs::write(&q, "dataset_id,subject_id,config_id,family_id,s_m,iq,eq\nd,s,ARM_layer_1,ARM,0.1,0.2,0.3\n").unwrap();
    let out = mutqual(&["select", "--in", q.to_str().unwrap(), "--tau", "1.5", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(1));
}
