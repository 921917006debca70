//! Deterministic synthetic prediction logs with planted kill profiles.
//!
//! Originals always predict the true label, so a variant's planted
//! misclassification probability on a test is exactly its expected KP.
//!
//! Every random draw is a pure function of
//! `(seed, dataset, subject, variant, run, test)`:
//!
//! ```text
//! h    = mix(seed ^ 0x6d75_7471_7561_6c31)
//! h    = absorb(h, fnv1a(dataset)); absorb(h, fnv1a(subject))
//! h    = absorb(h, kind)            // 1 = faulty, 2 = mutant
//! h    = absorb(h, fnv1a(config))   // "" for the faulty model
//! cell = absorb(absorb(h, run), test_index)
//! u_kill  = unit(absorb(cell, 1))
//! u_share = unit(absorb(cell, 2))
//! ```
//!
//! where `mix` is the SplitMix64 finalizer, `absorb(h, x) = mix((h +
//! 0x9e3779b97f4a7c15) ^ x)` and `unit(h) = (h >> 11) · 2⁻⁵³`.
//!
//! The faulty model kills `(run, test)` iff `u_kill < p_f(t)`. A mutant with
//! fault correlation `w` reuses the fault's `u_kill` for the cell when
//! `u_share < w` and its own otherwise, and kills iff that uniform is below
//! `w·p_f(t) + (1 − w)·p_m(t)`. The marginal kill probability is therefore the
//! blended profile while the kill pattern is shared with the fault at rate `w`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ModelKind, PredictionRecord, VariantId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("unknown variant: {0}")]
    UnknownVariant(String),
}

/// Per-test kill probability: one value for every test, or one per test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KillProfile {
    Constant(f64),
    PerTest(Vec<f64>),
}

impl KillProfile {
    pub fn prob(&self, test: usize) -> f64 {
        match self {
            KillProfile::Constant(p) => *p,
            KillProfile::PerTest(ps) => ps[test],
        }
    }

    fn check(&self, n_tests: u32, what: &str) -> Result<(), SynthError> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        match self {
            KillProfile::Constant(p) if !ok(*p) => Err(invalid(format!("{what}: probability {p} outside [0, 1]"))),
            KillProfile::PerTest(ps) if ps.len() != n_tests as usize => Err(invalid(format!(
                "{what}: {} per-test probabilities for {n_tests} tests",
                ps.len()
            ))),
            KillProfile::PerTest(ps) => match ps.iter().find(|p| !ok(**p)) {
                Some(p) => Err(invalid(format!("{what}: probability {p} outside [0, 1]"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

fn invalid(detail: String) -> SynthError {
    SynthError::InvalidSpec(detail)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family_id: String,
    pub configs_per_family: u32,
    pub kill_profile: KillProfile,
    #[serde(default)]
    pub correlation_with_fault: f64,
}

impl FamilySpec {
    /// Raw configuration ids of the family: `<family_id>_layer_<i>`, which the
    /// default canonicalization rules map back onto `family_id`.
    pub fn config_ids(&self) -> impl Iterator<Item = String> + '_ {
        (1..=self.configs_per_family).map(move |i| format!("{}_layer_{i}", self.family_id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub subject_id: String,
    pub n_runs: u32,
    pub n_tests: u32,
    /// Absent for subjects without a faulty model.
    #[serde(default)]
    pub fault_kill_profile: Option<KillProfile>,
    pub families: Vec<FamilySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub dataset_id: String,
    pub subjects: Vec<SubjectSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub datasets: Vec<DatasetSpec>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut datasets = alloc::collections::BTreeSet::new();
        for d in &self.datasets {
            if d.dataset_id.is_empty() || !datasets.insert(d.dataset_id.as_str()) {
                return Err(invalid(format!("dataset id {:?} empty or repeated", d.dataset_id)));
            }
            let mut subjects = alloc::collections::BTreeSet::new();
            for s in &d.subjects {
                let at = format!("{}/{}", d.dataset_id, s.subject_id);
                if s.subject_id.is_empty() || !subjects.insert(s.subject_id.as_str()) {
                    return Err(invalid(format!("subject id {at:?} empty or repeated")));
                }
                if s.n_runs == 0 || s.n_tests == 0 {
                    return Err(invalid(format!("{at}: n_runs and n_tests must be at least 1")));
                }
                if let Some(p) = &s.fault_kill_profile {
                    p.check(s.n_tests, &format!("{at} fault"))?;
                }
                let mut configs = alloc::collections::BTreeSet::new();
                for f in &s.families {
                    let what = format!("{at} family {}", f.family_id);
                    if f.family_id.is_empty() || f.configs_per_family == 0 {
                        return Err(invalid(format!("{what}: empty id or zero configs")));
                    }
                    f.kill_profile.check(s.n_tests, &what)?;
                    let w = f.correlation_with_fault;
                    if !(0.0..=1.0).contains(&w) {
                        return Err(invalid(format!("{what}: correlation {w} outside [0, 1]")));
                    }
                    if w > 0.0 && s.fault_kill_profile.is_none() {
                        return Err(invalid(format!("{what}: correlation without a fault profile")));
                    }
                    for c in f.config_ids() {
                        if !configs.insert(c.clone()) {
                            return Err(invalid(format!("{at}: config {c:?} generated twice")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Total number of mutants the scenario generates.
    pub fn mutant_count(&self) -> u64 {
        self.datasets
            .iter()
            .flat_map(|d| &d.subjects)
            .flat_map(|s| &s.families)
            .map(|f| u64::from(f.configs_per_family))
            .sum()
    }

    fn subject(&self, dataset_id: &str, subject_id: &str) -> Option<&SubjectSpec> {
        self.datasets
            .iter()
            .find(|d| d.dataset_id == dataset_id)?
            .subjects
            .iter()
            .find(|s| s.subject_id == subject_id)
    }
}

const SEED_DOMAIN: u64 = 0x6d75_7471_7561_6c31;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, x: u64) -> u64 {
    mix(h.wrapping_add(GOLDEN) ^ x)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[inline]
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn variant_key(seed: u64, dataset: &str, subject: &str, variant: &VariantId) -> u64 {
    let tag = match variant {
        VariantId::Faulty => 1,
        VariantId::Mutant(_) => 2,
    };
    let mut h = mix(seed ^ SEED_DOMAIN);
    h = absorb(h, fnv1a(dataset));
    h = absorb(h, fnv1a(subject));
    h = absorb(h, tag);
    absorb(h, fnv1a(variant.config_id()))
}

#[inline]
fn cell_key(variant_key: u64, run: u32, test: usize) -> u64 {
    absorb(absorb(variant_key, u64::from(run)), test as u64)
}

/// Canonical test ids: zero-padded so lexicographic order is index order.
pub fn test_ids(n_tests: u32) -> Vec<String> {
    let width = format!("{}", n_tests.saturating_sub(1)).len();
    (0..n_tests).map(|i| format!("t{i:0width$}")).collect()
}

fn true_label(test: usize) -> &'static str {
    if test.is_multiple_of(2) { "0" } else { "1" }
}

fn flipped(label: &'static str) -> &'static str {
    if label == "0" { "1" } else { "0" }
}

/// Emits every record of one subject: originals, the faulty model, then
/// mutants family by family; runs ascending, tests in canonical order.
pub fn for_each_subject_record<F>(seed: u64, dataset_id: &str, subject: &SubjectSpec, mut f: F)
where
    F: FnMut(&PredictionRecord),
{
    let tests = subject.n_tests as usize;
    let runs = subject.n_runs;
    let names = test_ids(subject.n_tests);
    let mut rec = PredictionRecord {
        dataset_id: dataset_id.to_string(),
        subject_id: subject.subject_id.clone(),
        model_kind: ModelKind::Original,
        config_id: String::new(),
        run_index: 1,
        test_id: String::new(),
        true_label: String::new(),
        predicted_label: String::new(),
    };
    let mut emit_grid = |rec: &mut PredictionRecord, killed: &mut dyn FnMut(u32, usize) -> bool| {
        for run in 1..=runs {
            rec.run_index = run;
            for (t, name) in names.iter().enumerate() {
                let truth = true_label(t);
                rec.test_id.clone_from(name);
                rec.true_label.clear();
                rec.true_label.push_str(truth);
                rec.predicted_label.clear();
                rec.predicted_label
                    .push_str(if killed(run, t) { flipped(truth) } else { truth });
                f(rec);
            }
        }
    };

    emit_grid(&mut rec, &mut |_, _| false);

    // Fault uniforms are shared with correlated mutants, so keep them.
    let fault_uniforms: Vec<f64> = match &subject.fault_kill_profile {
        Some(_) => {
            let key = variant_key(seed, dataset_id, &subject.subject_id, &VariantId::Faulty);
            (1..=runs)
                .flat_map(|run| (0..tests).map(move |t| unit(absorb(cell_key(key, run, t), 1))))
                .collect()
        }
        None => Vec::new(),
    };
    let fault_u = |run: u32, t: usize| fault_uniforms[(run as usize - 1) * tests + t];

    if let Some(profile) = &subject.fault_kill_profile {
        rec.model_kind = ModelKind::Faulty;
        emit_grid(&mut rec, &mut |run, t| fault_u(run, t) < profile.prob(t));
    }

    rec.model_kind = ModelKind::Mutant;
    for family in &subject.families {
        let w = family.correlation_with_fault;
        let blended: Vec<f64> = (0..tests)
            .map(|t| {
                let pm = family.kill_profile.prob(t);
                match &subject.fault_kill_profile {
                    Some(pf) => w * pf.prob(t) + (1.0 - w) * pm,
                    None => pm,
                }
            })
            .collect();
        for config in family.config_ids() {
            let key = variant_key(
                seed,
                dataset_id,
                &subject.subject_id,
                &VariantId::Mutant(config.clone()),
            );
            rec.config_id = config;
            emit_grid(&mut rec, &mut |run, t| {
                let cell = cell_key(key, run, t);
                let u = if w > 0.0 && unit(absorb(cell, 2)) < w {
                    fault_u(run, t)
                } else {
                    unit(absorb(cell, 1))
                };
                u < blended[t]
            });
        }
    }
}

/// Emits every record of a validated scenario, dataset by dataset.
pub fn for_each_record<F>(spec: &ScenarioSpec, mut f: F) -> Result<(), SynthError>
where
    F: FnMut(&PredictionRecord),
{
    spec.validate()?;
    for d in &spec.datasets {
        for s in &d.subjects {
            for_each_subject_record(spec.seed, &d.dataset_id, s, &mut f);
        }
    }
    Ok(())
}

/// All records of a scenario, in emission order.
pub fn records(spec: &ScenarioSpec) -> Result<Vec<PredictionRecord>, SynthError> {
    let mut out = Vec::new();
    for_each_record(spec, |r| out.push(r.clone()))?;
    Ok(out)
}

/// Planted kill probability of a variant on test index `test`, which is the
/// expectation of its KP.
pub fn expected_kp(
    spec: &ScenarioSpec,
    dataset_id: &str,
    subject_id: &str,
    variant: &VariantId,
    test: usize,
) -> Result<f64, SynthError> {
    let unknown = || SynthError::UnknownVariant(format!("{dataset_id}/{subject_id}/{variant}"));
    let subject = spec.subject(dataset_id, subject_id).ok_or_else(unknown)?;
    if test >= subject.n_tests as usize {
        return Err(unknown());
    }
    match variant {
        VariantId::Faulty => subject
            .fault_kill_profile
            .as_ref()
            .map(|p| p.prob(test))
            .ok_or_else(unknown),
        VariantId::Mutant(config) => {
            let family = subject
                .families
                .iter()
                .find(|f| f.config_ids().any(|c| &c == config))
                .ok_or_else(unknown)?;
            let pm = family.kill_profile.prob(test);
            Ok(match &subject.fault_kill_profile {
                Some(pf) => {
                    let w = family.correlation_with_fault;
                    w * pf.prob(test) + (1.0 - w) * pm
                }
                None => pm,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::group_runs;
    use crate::quality::{score_subject, SubjectKpSet};
    use alloc::vec;

    fn family(id: &str, configs: u32, p: f64, w: f64) -> FamilySpec {
        FamilySpec {
            family_id: id.into(),
            configs_per_family: configs,
            kill_profile: KillProfile::Constant(p),
            correlation_with_fault: w,
        }
    }

    fn scenario(seed: u64, runs: u32, tests: u32, pf: f64, families: Vec<FamilySpec>) -> ScenarioSpec {
        ScenarioSpec {
            seed,
            datasets: vec![DatasetSpec {
                dataset_id: "d".into(),
                subjects: vec![SubjectSpec {
                    subject_id: "s".into(),
                    n_runs: runs,
                    n_tests: tests,
                    fault_kill_profile: Some(KillProfile::Constant(pf)),
                    families,
                }],
            }],
        }
    }

    fn scores(spec: &ScenarioSpec) -> Vec<crate::domain::MutantQuality> {
        let grouped = group_runs(records(spec).unwrap()).unwrap();
        grouped
            .values()
            .flat_map(|r| score_subject(&SubjectKpSet::from_runs(r)).unwrap())
            .collect()
    }

    #[test]
    fn zero_and_one_probabilities_give_zero_iq() {
        for p in [0.0, 1.0] {
            let spec = scenario(3, 5, 20, 0.3, vec![family("ARM", 3, p, 0.0)]);
            for q in scores(&spec) {
                assert_eq!(q.iq, 0.0);
                assert_eq!(q.s_m, p);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let spec = scenario(11, 3, 10, 0.4, vec![family("ARM", 2, 0.5, 0.5)]);
        assert_eq!(records(&spec).unwrap(), records(&spec).unwrap());
        let other = ScenarioSpec { seed: 12, ..spec.clone() };
        assert_ne!(records(&spec).unwrap(), records(&other).unwrap());
    }

    #[test]
    fn test_ids_sort_by_index() {
        let ids = test_ids(12);
        assert_eq!(ids[0], "t00");
        assert_eq!(ids[11], "t11");
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(sorted, ids);
        assert_eq!(test_ids(1), vec!["t0".to_string()]);
    }

    #[test]
    fn expected_kp_blends_linearly() {
        let spec = scenario(1, 5, 4, 0.6, vec![family("ARM", 1, 0.3, 0.0), family("ACH_relu", 1, 0.2, 0.25)]);
        assert_eq!(expected_kp(&spec, "d", "s", &VariantId::mutant("ARM_layer_1"), 0), Ok(0.3));
        assert_eq!(expected_kp(&spec, "d", "s", &VariantId::Faulty, 3), Ok(0.6));
        let blended = expected_kp(&spec, "d", "s", &VariantId::mutant("ACH_relu_layer_1"), 2).unwrap();
        assert!((blended - (0.25 * 0.6 + 0.75 * 0.2)).abs() < 1e-15);
        assert!(expected_kp(&spec, "d", "s", &VariantId::mutant("nope"), 0).is_err());
        assert!(expected_kp(&spec, "d", "x", &VariantId::Faulty, 0).is_err());
        assert!(expected_kp(&spec, "d", "s", &VariantId::Faulty, 4).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = scenario(1, 5, 4, 0.6, vec![family("ARM", 1, 1.2, 0.0)]);
        assert!(matches!(spec.validate(), Err(SynthError::InvalidSpec(_))));
        spec = scenario(1, 0, 4, 0.6, vec![]);
        assert!(spec.validate().is_err());
        spec = scenario(1, 2, 4, 0.6, vec![family("A", 1, 0.1, 0.0)]);
        spec.datasets[0].subjects[0].families[0].kill_profile = KillProfile::PerTest(vec![0.1; 3]);
        assert!(spec.validate().is_err());
        spec = scenario(1, 2, 4, 0.6, vec![family("A", 1, 0.1, 0.5)]);
        spec.datasets[0].subjects[0].fault_kill_profile = None;
        assert!(spec.validate().is_err());
        spec = scenario(1, 2, 4, 0.6, vec![family("A", 1, 0.1, 0.0), family("A", 2, 0.1, 0.0)]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn full_correlation_copies_the_fault() {
        let spec = scenario(5, 5, 50, 0.5, vec![family("ARM", 1, 0.5, 1.0)]);
        let q = scores(&spec);
        assert_eq!(q[0].eq, Some(1.0));
    }
}
