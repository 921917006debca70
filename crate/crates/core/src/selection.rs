//! Canonical configuration families, median-based quadrant labelling,
//! hit-rate selection, and held-out validation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{FamilyStats, MutantQuality};
use crate::numfmt::fmt_sig_digits;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error("no canonicalization rule matches config {0:?}")]
    NoRuleMatch(String),
    #[error("config {config_id:?} matches several rules: {prefixes:?}")]
    AmbiguousRule {
        config_id: String,
        prefixes: Vec<String>,
    },
    #[error("config {config_id:?}: {detail}")]
    BadParameter { config_id: String, detail: String },
    #[error("invalid rule: {0}")]
    InvalidRule(String),
}

/// What a rule does to the tokens after its operator prefix.
///
/// Every action first drops `layer_<index>` token pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CanonAction {
    /// Keep all remaining tokens.
    StripLayerIndex,
    /// Replace `pct_<v>` with `pct_<lo>_<hi>` for the bucket `lo < v <= hi`.
    BucketPercentage { edges: Vec<f64> },
    /// Keep only the first remaining token (the category value).
    KeepCategory,
    /// Keep the operator id only.
    ToggleOnly,
    /// Keep remaining tokens, normalizing the number after `factor`.
    KeepFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonRule {
    pub prefix: String,
    #[serde(flatten)]
    pub action: CanonAction,
}

impl CanonRule {
    pub fn new(prefix: impl Into<String>, action: CanonAction) -> Self {
        CanonRule {
            prefix: prefix.into(),
            action,
        }
    }

    fn matches(&self, config_id: &str) -> bool {
        config_id
            .strip_prefix(self.prefix.as_str())
            .is_some_and(|rest| rest.is_empty() || rest.starts_with('_'))
    }
}

/// Percentage bucket edges used by the default rules.
pub const DEFAULT_PCT_EDGES: [f64; 8] = [0.0, 5.0, 15.0, 30.0, 50.0, 70.0, 90.0, 100.0];

/// An ordered, validated list of canonicalization rules.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonRuleSet {
    rules: Vec<CanonRule>,
}

impl CanonRuleSet {
    pub fn new(rules: Vec<CanonRule>) -> Result<Self, CanonError> {
        let mut seen = BTreeSet::new();
        for rule in &rules {
            if rule.prefix.is_empty() || rule.prefix.ends_with('_') {
                return Err(CanonError::InvalidRule(format!(
                    "prefix {:?} must be non-empty and not end with '_'",
                    rule.prefix
                )));
            }
            if !seen.insert(rule.prefix.as_str()) {
                return Err(CanonError::InvalidRule(format!(
                    "prefix {:?} appears twice",
                    rule.prefix
                )));
            }
            if let CanonAction::BucketPercentage { edges } = &rule.action {
                let ascending = edges.windows(2).all(|w| w[0] < w[1]);
                let covers = edges.first() == Some(&0.0) && edges.last() == Some(&100.0);
                if edges.len() < 2 || !ascending || !covers {
                    return Err(CanonError::InvalidRule(format!(
                        "{}: bucket edges {edges:?} must be strictly ascending from 0 to 100",
                        rule.prefix
                    )));
                }
            }
        }
        Ok(CanonRuleSet { rules })
    }

    /// Rules for the 24 pre-training operators: percentage operators are
    /// bucketed, hyperparameter operators keep their factor, toggles collapse
    /// to the operator id, and layer-level operators drop layer indices.
    pub fn default_rules() -> Self {
        use CanonAction::*;
        let pct = || BucketPercentage {
            edges: DEFAULT_PCT_EDGES.to_vec(),
        };
        let table: [(&str, CanonAction); 24] = [
            ("TCL", pct()),
            ("TRD", pct()),
            ("TUD", pct()),
            ("TAN", pct()),
            ("TCO", pct()),
            ("HBS", KeepFactor),
            ("HLR", KeepFactor),
            ("HNE", KeepFactor),
            ("HDB", ToggleOnly),
            ("ACH", StripLayerIndex),
            ("ARM", StripLayerIndex),
            ("AAL", StripLayerIndex),
            ("RAW", StripLayerIndex),
            ("RCW", StripLayerIndex),
            ("RRW", StripLayerIndex),
            ("RCD", StripLayerIndex),
            ("RCP", KeepFactor),
            ("WCI", StripLayerIndex),
            ("WAB", StripLayerIndex),
            ("WRB", StripLayerIndex),
            ("LCH", KeepCategory),
            ("OCH", KeepCategory),
            ("OCG", KeepCategory),
            ("VRM", ToggleOnly),
        ];
        CanonRuleSet::new(table.into_iter().map(|(p, a)| CanonRule::new(p, a)).collect())
            .expect("default rules are valid")
    }

    pub fn rules(&self) -> &[CanonRule] {
        &self.rules
    }
}

impl Default for CanonRuleSet {
    fn default() -> Self {
        Self::default_rules()
    }
}

fn render_number(x: f64) -> String {
    fmt_sig_digits(x, 12)
}

fn parse_number(s: &str) -> Option<f64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
        return None;
    }
    s.parse::<f64>().ok()
}

/// Maps a raw configuration id onto its canonical family id.
pub fn canonicalize(config_id: &str, rules: &CanonRuleSet) -> Result<String, CanonError> {
    let matching: Vec<&CanonRule> = rules.rules.iter().filter(|r| r.matches(config_id)).collect();
    let rule = match matching.as_slice() {
        [] => return Err(CanonError::NoRuleMatch(config_id.to_string())),
        [one] => *one,
        many => {
            return Err(CanonError::AmbiguousRule {
                config_id: config_id.to_string(),
                prefixes: many.iter().map(|r| r.prefix.clone()).collect(),
            })
        }
    };
    let rest = &config_id[rule.prefix.len()..];
    let raw: Vec<&str> = rest.split('_').filter(|t| !t.is_empty()).collect();
    let mut tokens: Vec<String> = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        let is_layer = raw[i] == "layer"
            && raw.get(i + 1).is_some_and(|n| n.bytes().all(|b| b.is_ascii_digit()));
        if is_layer {
            i += 2;
        } else {
            tokens.push(raw[i].to_string());
            i += 1;
        }
    }
    let bad = |detail: String| CanonError::BadParameter {
        config_id: config_id.to_string(),
        detail,
    };

    let tokens = match &rule.action {
        CanonAction::StripLayerIndex => tokens,
        CanonAction::KeepCategory => tokens.into_iter().take(1).collect(),
        CanonAction::ToggleOnly => Vec::new(),
        CanonAction::KeepFactor => {
            let mut out = tokens;
            if let Some(p) = out.iter().position(|t| t == "factor") {
                let value = out
                    .get(p + 1)
                    .and_then(|v| parse_number(v))
                    .ok_or_else(|| bad("`factor` is not followed by a number".into()))?;
                out[p + 1] = render_number(value);
            }
            out
        }
        CanonAction::BucketPercentage { edges } => {
            let p = tokens
                .iter()
                .position(|t| t == "pct")
                .ok_or_else(|| bad("no `pct_<value>` parameter".into()))?;
            let value = tokens
                .get(p + 1)
                .and_then(|v| parse_number(v))
                .ok_or_else(|| bad("`pct` is not followed by a number".into()))?;
            let upper = tokens.get(p + 2).and_then(|v| parse_number(v));
            let already = upper.is_some_and(|hi| edges.windows(2).any(|w| w[0] == value && w[1] == hi));
            let mut out = tokens.clone();
            if already {
                let (lo, hi) = (value, upper.expect("checked above"));
                out[p + 1] = render_number(lo);
                out[p + 2] = render_number(hi);
            } else {
                let bucket = edges
                    .windows(2)
                    .find(|w| w[0] < value && value <= w[1])
                    .ok_or_else(|| {
                        bad(format!(
                            "percentage {value} outside ({}, {}]",
                            edges[0],
                            edges[edges.len() - 1]
                        ))
                    })?;
                out.splice(
                    p + 1..p + 2,
                    [render_number(bucket[0]), render_number(bucket[1])],
                );
            }
            out
        }
    };
    let mut family = rule.prefix.clone();
    for t in tokens {
        family.push('_');
        family.push_str(&t);
    }
    Ok(family)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("dataset {0:?} has no mutants")]
    EmptyDataset(String),
    #[error("dataset {0:?} has no mutant with a defined EQ")]
    NoEqValues(String),
    #[error("mutant {0:?} has no EQ (subject without faulty model)")]
    EqUndefined(String),
    #[error("mutant {0:?} has no family id")]
    MissingFamily(String),
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("invalid mutant counts: before={before}, after={after}")]
    InvalidCounts { before: u64, after: u64 },
    #[error("held-out quality set is empty")]
    EmptyHoldout,
}

/// Dataset-specific IQ and EQ medians that split the IQ-EQ plane into quadrants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantThresholds {
    pub dataset_id: String,
    pub median_iq: f64,
    pub median_eq: f64,
}

/// Median with the even-count convention of averaging the two middle values.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

/// Medians of IQ (over all the dataset's mutants) and EQ (over those with a
/// defined EQ), pooled across the dataset's subjects.
pub fn compute_thresholds(
    qualities: &[MutantQuality],
    dataset_id: &str,
) -> Result<QuadrantThresholds, SelectionError> {
    let mut iq = Vec::new();
    let mut eq = Vec::new();
    for q in qualities.iter().filter(|q| q.dataset_id == dataset_id) {
        iq.push(q.iq);
        eq.extend(q.eq);
    }
    let median_iq = median(&mut iq).ok_or_else(|| SelectionError::EmptyDataset(dataset_id.into()))?;
    let median_eq = median(&mut eq).ok_or_else(|| SelectionError::NoEqValues(dataset_id.into()))?;
    Ok(QuadrantThresholds {
        dataset_id: dataset_id.into(),
        median_iq,
        median_eq,
    })
}

/// Thresholds for every dataset present, in dataset order.
pub fn thresholds_by_dataset(
    qualities: &[MutantQuality],
) -> Result<BTreeMap<String, QuadrantThresholds>, SelectionError> {
    let datasets: BTreeSet<&str> = qualities.iter().map(|q| q.dataset_id.as_str()).collect();
    datasets
        .into_iter()
        .map(|d| Ok((d.to_string(), compute_thresholds(qualities, d)?)))
        .collect()
}

/// IQ-EQ quadrant; the first letter is the IQ side, the second the EQ side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    #[serde(rename = "HH")]
    HighHigh,
    #[serde(rename = "HL")]
    HighLow,
    #[serde(rename = "LH")]
    LowHigh,
    #[serde(rename = "LL")]
    LowLow,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::HighHigh,
        Quadrant::HighLow,
        Quadrant::LowHigh,
        Quadrant::LowLow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::HighHigh => "HH",
            Quadrant::HighLow => "HL",
            Quadrant::LowHigh => "LH",
            Quadrant::LowLow => "LL",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// "High" on an axis means at least the dataset median.
pub fn label_quadrant(
    q: &MutantQuality,
    th: &QuadrantThresholds,
) -> Result<Quadrant, SelectionError> {
    let eq = q
        .eq
        .ok_or_else(|| SelectionError::EqUndefined(q.config_id.clone()))?;
    Ok(match (q.iq >= th.median_iq, eq >= th.median_eq) {
        (true, true) => Quadrant::HighHigh,
        (true, false) => Quadrant::HighLow,
        (false, true) => Quadrant::LowHigh,
        (false, false) => Quadrant::LowLow,
    })
}

/// Quadrant tallies in [`Quadrant::ALL`] order over mutants with a defined EQ.
pub fn quadrant_counts(qualities: &[MutantQuality], th: &QuadrantThresholds) -> [u64; 4] {
    let mut counts = [0u64; 4];
    for q in qualities.iter().filter(|q| q.eq.is_some()) {
        let label = label_quadrant(q, th).expect("filtered on defined EQ");
        counts[label.index()] += 1;
    }
    counts
}

/// Pools quadrant labels into per-family High-High hit rates.
pub fn family_hit_rates<I, F>(labeled: I) -> BTreeMap<String, FamilyStats>
where
    I: IntoIterator<Item = (F, Quadrant)>,
    F: AsRef<str>,
{
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (family, quadrant) in labeled {
        let family = family.as_ref();
        let entry = match counts.get_mut(family) {
            Some(e) => e,
            None => counts.entry(family.to_string()).or_default(),
        };
        entry.0 += 1;
        entry.1 += u64::from(quadrant == Quadrant::HighHigh);
    }
    counts
        .into_iter()
        .map(|(f, (total, hh))| (f.clone(), FamilyStats::new(f, total, hh)))
        .collect()
}

/// Comparison between a family's hit rate and `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionRule {
    /// `hit_rate >= tau`
    #[default]
    AtLeast,
    /// `hit_rate > tau`
    Exceeds,
}

impl RetentionRule {
    pub fn retains(self, hit_rate: f64, tau: f64) -> bool {
        match self {
            RetentionRule::AtLeast => hit_rate >= tau,
            RetentionRule::Exceeds => hit_rate > tau,
        }
    }
}

/// Outcome of hit-rate selection over the selection datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub tau: f64,
    #[serde(default)]
    pub retention: RetentionRule,
    pub families_total: u64,
    pub families_retained: u64,
    pub retained_ids: BTreeSet<String>,
    pub family_stats: Vec<FamilyStats>,
    /// Per-dataset medians the labels were computed with.
    #[serde(default)]
    pub thresholds: Vec<QuadrantThresholds>,
}

impl SelectionReport {
    /// Families that would be retained at another threshold.
    pub fn retained_at(&self, tau: f64, rule: RetentionRule) -> BTreeSet<String> {
        self.family_stats
            .iter()
            .filter(|s| rule.retains(s.hit_rate, tau))
            .map(|s| s.family_id.clone())
            .collect()
    }
}

fn check_tau(tau: f64) -> Result<(), SelectionError> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(SelectionError::InvalidTau(tau))
    }
}

/// Retains every family whose hit rate passes `tau` under `rule`.
pub fn select_families(
    stats: &BTreeMap<String, FamilyStats>,
    tau: f64,
    rule: RetentionRule,
) -> Result<SelectionReport, SelectionError> {
    check_tau(tau)?;
    let retained_ids: BTreeSet<String> = stats
        .values()
        .filter(|s| rule.retains(s.hit_rate, tau))
        .map(|s| s.family_id.clone())
        .collect();
    Ok(SelectionReport {
        tau,
        retention: rule,
        families_total: stats.len() as u64,
        families_retained: retained_ids.len() as u64,
        retained_ids,
        family_stats: stats.values().cloned().collect(),
        thresholds: Vec::new(),
    })
}

/// Full selection over a quality corpus: per-dataset medians, local labels,
/// pooled hit rates. Mutants without EQ cannot be labelled and are skipped.
pub fn run_selection(
    qualities: &[MutantQuality],
    tau: f64,
    rule: RetentionRule,
) -> Result<SelectionReport, SelectionError> {
    check_tau(tau)?;
    if let Some(q) = qualities.iter().find(|q| q.family_id.is_empty()) {
        return Err(SelectionError::MissingFamily(q.config_id.clone()));
    }
    let thresholds = thresholds_by_dataset(qualities)?;
    let labeled = qualities.iter().filter(|q| q.eq.is_some()).map(|q| {
        let label = label_quadrant(q, &thresholds[&q.dataset_id]).expect("EQ defined");
        (q.family_id.as_str(), label)
    });
    let stats = family_hit_rates(labeled);
    let mut report = select_families(&stats, tau, rule)?;
    report.thresholds = thresholds.into_values().collect();
    Ok(report)
}

/// `RR = 1 - after / before`.
pub fn reduction_ratio(before: u64, after: u64) -> Result<f64, SelectionError> {
    if before == 0 || after > before {
        return Err(SelectionError::InvalidCounts { before, after });
    }
    Ok(1.0 - after as f64 / before as f64)
}

/// Signed relative changes `(after - before) / before`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeChanges {
    pub median_iq: Option<f64>,
    pub median_eq: Option<f64>,
    pub hh: Option<f64>,
}

/// Cost and quality of a held-out dataset before and after family selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mutants_before: u64,
    pub mutants_after: u64,
    pub reduction_ratio: f64,
    pub median_iq_before: f64,
    pub median_iq_after: Option<f64>,
    pub median_eq_before: f64,
    pub median_eq_after: Option<f64>,
    pub hh_before: f64,
    pub hh_after: Option<f64>,
    pub relative_changes: RelativeChanges,
    /// True when no held-out mutant belongs to a retained family.
    pub empty_after_set: bool,
    /// Baseline medians used for both the before and after labels.
    pub thresholds: Vec<QuadrantThresholds>,
}

fn relative(before: f64, after: Option<f64>) -> Option<f64> {
    after.filter(|_| before != 0.0).map(|a| (a - before) / before)
}

struct SetSummary {
    median_iq: Option<f64>,
    median_eq: Option<f64>,
    hh: Option<f64>,
}

fn summarize<'a>(
    set: impl Iterator<Item = &'a MutantQuality>,
    thresholds: &BTreeMap<String, QuadrantThresholds>,
) -> SetSummary {
    let (mut iq, mut eq) = (Vec::new(), Vec::new());
    let mut hh = 0u64;
    for q in set {
        iq.push(q.iq);
        if let Some(e) = q.eq {
            eq.push(e);
            let label = label_quadrant(q, &thresholds[&q.dataset_id]).expect("EQ defined");
            hh += u64::from(label == Quadrant::HighHigh);
        }
    }
    let labeled = eq.len();
    SetSummary {
        median_iq: median(&mut iq),
        median_eq: median(&mut eq),
        hh: (labeled > 0).then(|| hh as f64 / labeled as f64),
    }
}

/// Compares all held-out mutants with those whose family is retained.
///
/// Medians are frozen from the full held-out baseline (per dataset) and used
/// to label both sets. An empty after-set is reported, not treated as an error.
pub fn validate_holdout(
    holdout: &[MutantQuality],
    retained: &BTreeSet<String>,
) -> Result<ValidationReport, SelectionError> {
    if holdout.is_empty() {
        return Err(SelectionError::EmptyHoldout);
    }
    let thresholds = thresholds_by_dataset(holdout)?;
    let before = summarize(holdout.iter(), &thresholds);
    let kept: Vec<&MutantQuality> = holdout
        .iter()
        .filter(|q| retained.contains(&q.family_id))
        .collect();
    let after = summarize(kept.iter().copied(), &thresholds);
    let (n_before, n_after) = (holdout.len() as u64, kept.len() as u64);
    let median_iq_before = before.median_iq.expect("non-empty holdout");
    let median_eq_before = before.median_eq.expect("thresholds imply an EQ value");
    let hh_before = before.hh.expect("thresholds imply an EQ value");
    Ok(ValidationReport {
        mutants_before: n_before,
        mutants_after: n_after,
        reduction_ratio: reduction_ratio(n_before, n_after)?,
        median_iq_before,
        median_iq_after: after.median_iq,
        median_eq_before,
        median_eq_after: after.median_eq,
        hh_before,
        hh_after: after.hh,
        relative_changes: RelativeChanges {
            median_iq: relative(median_iq_before, after.median_iq),
            median_eq: relative(median_eq_before, after.median_eq),
            hh: relative(hh_before, after.hh),
        },
        empty_after_set: kept.is_empty(),
        thresholds: thresholds.into_values().collect(),
    })
}

/// Fills `family_id` of every quality record from its `config_id`.
pub fn assign_families(
    qualities: &mut [MutantQuality],
    rules: &CanonRuleSet,
) -> Result<(), CanonError> {
    for q in qualities {
        q.family_id = canonicalize(&q.config_id, rules)?;
    }
    Ok(())
}
