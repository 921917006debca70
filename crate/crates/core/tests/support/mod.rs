//! Random small subjects and a reference implementation that evaluates the
//! killing, coverage and quality formulas directly on raw labels.

#![allow(dead_code)]

use std::sync::Arc;

use mutqual_core::domain::{ModelKind, PredictionRecord, VariantId};
use mutqual_core::grouping::group_runs;
use mutqual_core::killing::{build_execution_matrix, killing_probabilities};
use mutqual_core::quality::{mutant_coverage, score_subject, SubjectKpSet};
use proptest::prelude::*;

pub const TOL: f64 = 1e-12;

/// One subject: `[run][test]` label grids, labels drawn from {0, 1, 2}.
#[derive(Debug, Clone)]
pub struct Instance {
    pub truth: Vec<u8>,
    pub original: Vec<Vec<u8>>,
    pub fault: Option<Vec<Vec<u8>>>,
    pub mutants: Vec<Vec<Vec<u8>>>,
}

pub fn test_id(t: usize) -> String {
    format!("t{t:02}")
}

pub fn config_id(m: usize) -> String {
    format!("ARM_layer_{m:02}")
}

fn resolve(truth: &[u8], cells: Vec<Vec<(bool, u8)>>) -> Vec<Vec<u8>> {
    cells
        .into_iter()
        .map(|run| {
            run.into_iter()
                .zip(truth)
                .map(|((correct, off), y)| if correct { *y } else { (y + off) % 3 })
                .collect()
        })
        .collect()
}

/// Label grid where each cell is correct with probability `p`.
fn grid(runs: usize, tests: usize, p: f64) -> impl Strategy<Value = Vec<Vec<(bool, u8)>>> {
    prop::collection::vec(prop::collection::vec((prop::bool::weighted(p), 1u8..3), tests), runs)
}

/// Up to `max_tests` tests, `max_mutants` mutants and `max_runs` runs. Some
/// instances have perfect originals; some mutants are never or always wrong.
pub fn instance(max_tests: usize, max_mutants: usize, max_runs: usize) -> impl Strategy<Value = Instance> {
    (1..=max_runs, 1..=max_tests, 1..=max_mutants, prop::bool::weighted(0.25)).prop_flat_map(
        |(runs, tests, mutants, perfect)| {
            let p_orig = if perfect { 1.0 } else { 0.8 };
            (
                prop::collection::vec(0u8..3, tests),
                grid(runs, tests, p_orig),
                prop::option::weighted(0.8, grid(runs, tests, 0.6)),
                prop::collection::vec((0u8..8, grid(runs, tests, 0.6)), mutants),
            )
        },
    )
    .prop_map(|(truth, original, fault, mutants)| {
        let original = resolve(&truth, original);
        let fault = fault.map(|g| resolve(&truth, g));
        let mutants = mutants
            .into_iter()
            .map(|(style, g)| {
                let g = match style {
                    0 => g.into_iter().map(|run| run.into_iter().map(|(_, o)| (true, o)).collect()).collect(),
                    1 => g.into_iter().map(|run| run.into_iter().map(|(_, o)| (false, o)).collect()).collect(),
                    _ => g,
                };
                resolve(&truth, g)
            })
            .collect();
        Instance {
            truth,
            original,
            fault,
            mutants,
        }
    })
}

impl Instance {
    pub fn runs(&self) -> usize {
        self.original.len()
    }

    pub fn tests(&self) -> usize {
        self.truth.len()
    }

    pub fn records(&self) -> Vec<PredictionRecord> {
        let mut out = Vec::new();
        let mut push = |kind: ModelKind, config: String, grid: &Vec<Vec<u8>>| {
            for (r, run) in grid.iter().enumerate() {
                for (t, label) in run.iter().enumerate() {
                    out.push(PredictionRecord {
                        dataset_id: "d".into(),
                        subject_id: "s".into(),
                        model_kind: kind,
                        config_id: config.clone(),
                        run_index: r as u32 + 1,
                        test_id: test_id(t),
                        true_label: self.truth[t].to_string(),
                        predicted_label: label.to_string(),
                    });
                }
            }
        };
        push(ModelKind::Original, String::new(), &self.original);
        if let Some(f) = &self.fault {
            push(ModelKind::Faulty, String::new(), f);
        }
        for (m, g) in self.mutants.iter().enumerate() {
            push(ModelKind::Mutant, config_id(m), g);
        }
        out
    }
}

/// Straight evaluation of the definitions, with no shared code.
pub mod reference {
    pub fn ki(orig: u8, variant: u8, truth: u8) -> u8 {
        if orig == truth && variant != truth {
            1
        } else {
            0
        }
    }

    /// `[test][run]` execution matrix.
    pub fn matrix(truth: &[u8], original: &[Vec<u8>], variant: &[Vec<u8>]) -> Vec<Vec<u8>> {
        (0..truth.len())
            .map(|t| {
                (0..original.len())
                    .map(|r| ki(original[r][t], variant[r][t], truth[t]))
                    .collect()
            })
            .collect()
    }

    pub fn kp(matrix: &[Vec<u8>]) -> Vec<f64> {
        matrix
            .iter()
            .map(|row| row.iter().map(|&k| k as f64).sum::<f64>() / row.len() as f64)
            .collect()
    }

    pub fn coverage(kps: &[Vec<f64>]) -> Vec<f64> {
        let tests = kps[0].len();
        (0..tests)
            .map(|t| kps.iter().map(|kp| kp[t]).sum::<f64>() / kps.len() as f64)
            .collect()
    }

    pub fn s_m(kp: &[f64]) -> f64 {
        kp.iter().sum::<f64>() / kp.len() as f64
    }

    pub fn iq(kp: &[f64], coverage: &[f64]) -> f64 {
        let s = s_m(kp);
        if s == 0.0 {
            return 0.0;
        }
        let weighted: f64 = kp.iter().zip(coverage).map(|(k, c)| k * c).sum();
        let total: f64 = kp.iter().sum();
        (1.0 - s) * (1.0 - weighted / total)
    }

    pub fn eq(a: &[f64], b: &[f64]) -> f64 {
        let lo: f64 = a.iter().zip(b).map(|(x, y)| x.min(*y)).sum();
        let hi: f64 = a.iter().zip(b).map(|(x, y)| x.max(*y)).sum();
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }
}

fn close(what: &str, got: f64, want: f64) -> Result<(), String> {
    if (got - want).abs() <= TOL {
        Ok(())
    } else {
        Err(format!("{what}: pipeline {got} vs reference {want}"))
    }
}

/// Runs the pipeline on `inst` and compares every intermediate with the
/// reference. KI and KP must match exactly, the rest within [`TOL`].
pub fn check(inst: &Instance) -> Result<(), String> {
    let grouped = group_runs(inst.records()).map_err(|e| e.to_string())?;
    let runs = grouped.values().next().ok_or("no subject")?;

    let mut variants: Vec<(VariantId, &Vec<Vec<u8>>)> = Vec::new();
    if let Some(f) = &inst.fault {
        variants.push((VariantId::Faulty, f));
    }
    for (m, g) in inst.mutants.iter().enumerate() {
        variants.push((VariantId::mutant(config_id(m)), g));
    }
    let mut ref_kps = Vec::new();
    let mut ref_fault = None;
    for (variant, g) in &variants {
        let want = reference::matrix(&inst.truth, &inst.original, g);
        let m = build_execution_matrix(runs, variant).map_err(|e| e.to_string())?;
        for (t, row) in want.iter().enumerate() {
            if m.row(t) != row.as_slice() {
                return Err(format!("KI of {variant} on test {t}: {:?} vs {:?}", m.row(t), row));
            }
        }
        let kp = killing_probabilities(&m);
        let want_kp = reference::kp(&want);
        let got: Vec<f64> = kp.values().collect();
        if got != want_kp {
            return Err(format!("KP of {variant}: {got:?} vs {want_kp:?}"));
        }
        match variant {
            VariantId::Faulty => ref_fault = Some(want_kp),
            VariantId::Mutant(_) => ref_kps.push(want_kp),
        }
    }

    let set = SubjectKpSet::from_runs(runs);
    let coverage = mutant_coverage(&set).map_err(|e| e.to_string())?;
    let want_cov = reference::coverage(&ref_kps);
    for (t, want) in want_cov.iter().enumerate() {
        close(&format!("C_t of test {t}"), coverage.value(t), *want)?;
    }
    let scores = score_subject(&set).map_err(|e| e.to_string())?;
    if scores.len() != ref_kps.len() {
        return Err(format!("{} scores for {} mutants", scores.len(), ref_kps.len()));
    }
    for (m, (q, kp)) in scores.iter().zip(&ref_kps).enumerate() {
        if q.config_id != config_id(m) {
            return Err(format!("score order: {} at {m}", q.config_id));
        }
        close(&format!("S_m of {}", q.config_id), q.s_m, reference::s_m(kp))?;
        close(&format!("IQ of {}", q.config_id), q.iq, reference::iq(kp, &want_cov))?;
        match (&ref_fault, q.eq) {
            (Some(f), Some(eq)) => close(&format!("EQ of {}", q.config_id), eq, reference::eq(kp, f))?,
            (None, None) => {}
            (f, eq) => return Err(format!("EQ presence: fault {} vs eq {eq:?}", f.is_some())),
        }
    }
    Ok(())
}

/// A KP vector over `counts.len()` canonical tests.
pub fn kp_vector(variant: VariantId, runs: u32, counts: Vec<u32>) -> mutqual_core::domain::KpVector {
    let ids: Arc<[String]> = (0..counts.len()).map(test_id).collect();
    mutqual_core::domain::KpVector::from_counts(variant, ids, runs, counts).expect("valid counts")
}
