//! The `mutqual` command line.
//!
//! Exit status is 0 on success, 1 when the input is rejected by the domain
//! logic and 2 on a usage error.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mutqual_core::grouping::RunsGrouper;
use mutqual_core::selection::{validate_holdout, CanonRuleSet, RetentionRule, SelectionReport};
use mutqual_core::synth::{for_each_record, ScenarioSpec};

use crate::error::{Error, Result};
use crate::ingest::{parse_sources, LogFormat, LogSource, LogWriter};
use crate::pipeline::{analyze_grouped, read_rules_file, select_stored, to_json, AnalyzeOptions};
use crate::report::{emit_figures, emit_quality_csv, figure_thresholds};
use crate::table::read_quality_file;

#[derive(Debug, Parser)]
#[command(name = "mutqual", version, about = "Probabilistic quality scoring and selection of deep-learning mutants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct LogInput {
    /// Prediction log; repeat to merge several files.
    #[arg(long = "in", value_name = "LOG", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = LogFormat::Jsonl)]
    pub format: LogFormat,
    /// Declared number of training runs per model; run indices beyond it are rejected.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub runs: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check prediction logs against the schema and grouping rules.
    Validate(LogInput),
    /// Score every mutant and write the quality table.
    Analyze {
        #[command(flatten)]
        input: LogInput,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        /// Canonicalization rules, one JSON object per line (default: built-in rules).
        #[arg(long, value_name = "JSONL")]
        rules: Option<PathBuf>,
        /// Also write each variant's execution matrix as CSV into this directory.
        #[arg(long, value_name = "DIR")]
        dump_matrices: Option<PathBuf>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
    },
    /// Retain families whose High-High hit rate passes tau.
    Select {
        /// Quality table of the selection datasets.
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        tau: f64,
        /// Retain only families whose hit rate is strictly above tau.
        #[arg(long)]
        strict_exceeds: bool,
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Apply a selection to a held-out quality table.
    Holdout {
        /// Quality table of the held-out dataset.
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        #[arg(long, value_name = "JSON")]
        selection: PathBuf,
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Generate a synthetic prediction log from a scenario.
    Synth {
        #[arg(long, value_name = "JSON")]
        spec: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "LOG")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = LogFormat::Jsonl)]
        format: LogFormat,
    },
    /// Draw SVG figures from a quality table.
    Report {
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        #[arg(long, value_name = "JSON")]
        selection: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            0
        }
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                if !msg.ends_with(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                source = s.source();
            }
            let _ = writeln!(std::io::stderr(), "{msg}");
            1
        }
    }
}

fn group(input: &LogInput) -> Result<std::collections::BTreeMap<(String, String), mutqual_core::SubjectRuns>> {
    let sources: Vec<LogSource> = input.inputs.iter().map(|p| LogSource::new(p, input.format)).collect();
    let records = parse_sources(&sources)?;
    let mut grouper = match input.runs {
        Some(n) => RunsGrouper::with_declared_runs(n),
        None => RunsGrouper::new(),
    };
    for r in &records {
        grouper.push(r)?;
    }
    Ok(grouper.finish()?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(Error::io(path))
}

fn read_selection(path: &Path) -> Result<SelectionReport> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::bad_file(path, e))
}

fn execute(command: Command) -> Result<String> {
    match command {
        Command::Validate(input) => {
            let grouped = group(&input)?;
            let mutants: usize = grouped.values().map(|s| s.mutant_configs().len()).sum();
            Ok(format!("ok: {} subjects, {mutants} mutants", grouped.len()))
        }
        Command::Analyze {
            input,
            out,
            rules,
            dump_matrices,
            jobs,
        } => {
            let rules = match rules {
                Some(path) => read_rules_file(&path)?,
                None => CanonRuleSet::default_rules(),
            };
            let grouped = group(&input)?;
            let opts = AnalyzeOptions::new(&rules)
                .jobs(usize::from(jobs))
                .dump_matrices(dump_matrices.as_deref());
            let qualities = analyze_grouped(&grouped, opts)?;
            emit_quality_csv(&out, &qualities)?;
            Ok(String::new())
        }
        Command::Select {
            input,
            tau,
            strict_exceeds,
            out,
        } => {
            let qualities = read_quality_file(&input)?;
            let rule = if strict_exceeds { RetentionRule::Exceeds } else { RetentionRule::AtLeast };
            let report = select_stored(&qualities, tau, rule)?;
            write_text(&out, &to_json(&report))?;
            Ok(String::new())
        }
        Command::Holdout { input, selection, out } => {
            let qualities = read_quality_file(&input)?;
            let selection = read_selection(&selection)?;
            let report = validate_holdout(&qualities, &selection.retained_ids)?;
            write_text(&out, &to_json(&report))?;
            Ok(String::new())
        }
        Command::Synth { spec, seed, out, format } => {
            let text = std::fs::read_to_string(&spec).map_err(Error::io(&spec))?;
            let mut scenario: ScenarioSpec = serde_json::from_str(&text).map_err(|e| Error::bad_file(&spec, e))?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let file = std::fs::File::create(&out).map_err(Error::io(&out))?;
            let mut writer = LogWriter::new(std::io::BufWriter::new(file), format).map_err(Error::io(&out))?;
            let mut failure = None;
            for_each_record(&scenario, |r| {
                if failure.is_none() {
                    failure = writer.write(r).err();
                }
            })?;
            if let Some(e) = failure {
                return Err(Error::io(&out)(e));
            }
            writer.finish().map_err(Error::io(&out))?;
            Ok(String::new())
        }
        Command::Report { input, selection, out } => {
            let qualities = read_quality_file(&input)?;
            let selection = selection.as_deref().map(read_selection).transpose()?;
            let thresholds = figure_thresholds(&qualities);
            emit_figures(&qualities, &thresholds, selection.as_ref(), &out)?;
            Ok(String::new())
        }
    }
}
