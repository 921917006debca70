//! Prediction-log parsing and writing (line-delimited JSON and CSV).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use mutqual_core::domain::{PredictionRecord, RawRecord, RecordError};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::error::{Error, Result};

/// Declared on-disk log format. Never sniffed from the content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum LogFormat {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogSource {
    pub path: PathBuf,
    pub format: LogFormat,
}

impl LogSource {
    pub fn new(path: impl Into<PathBuf>, format: LogFormat) -> Self {
        LogSource {
            path: path.into(),
            format,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {detail}")]
    MalformedLine { line: u64, detail: String },
    #[error("line {line}: unknown field `{name}`")]
    UnknownField { line: u64, name: String },
    #[error("line {line}: {source}")]
    InvalidRecord {
        line: u64,
        #[source]
        source: RecordError,
    },
    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: u64, key: String },
    #[error("read failure: {0}")]
    Io(#[from] std::io::Error),
}

type OwnedKey = (String, String, u8, String, u32, String);

fn owned_key(r: &PredictionRecord) -> OwnedKey {
    (
        r.dataset_id.clone(),
        r.subject_id.clone(),
        r.model_kind as u8,
        r.config_id.clone(),
        r.run_index,
        r.test_id.clone(),
    )
}

/// Rejects repeated `(dataset, subject, kind, config, run, test)` keys.
#[derive(Debug, Default)]
pub struct DuplicateGuard {
    seen: HashSet<OwnedKey>,
}

impl DuplicateGuard {
    pub fn check(&mut self, record: &PredictionRecord, line: u64) -> Result<(), IngestError> {
        if self.seen.insert(owned_key(record)) {
            Ok(())
        } else {
            Err(IngestError::DuplicateKey {
                line,
                key: record.key().to_string(),
            })
        }
    }
}

fn malformed(line: u64, detail: impl ToString) -> IngestError {
    IngestError::MalformedLine {
        line,
        detail: detail.to_string(),
    }
}

fn parse_json_line(text: &str, line: u64) -> Result<PredictionRecord, IngestError> {
    let object: Map<String, Value> = serde_json::from_str(text).map_err(|e| malformed(line, e))?;
    if let Some(name) = object.keys().find(|k| !RawRecord::FIELDS.contains(&k.as_str())) {
        return Err(IngestError::UnknownField {
            line,
            name: name.clone(),
        });
    }
    let raw: RawRecord =
        serde_json::from_value(Value::Object(object)).map_err(|e| malformed(line, e))?;
    raw.into_record()
        .map_err(|source| IngestError::InvalidRecord { line, source })
}

/// Parses a whole log, stopping at the first error. Records keep file order.
pub fn parse_log<R: Read>(reader: R, format: LogFormat) -> Result<Vec<PredictionRecord>, IngestError> {
    let mut out = Vec::new();
    let mut guard = DuplicateGuard::default();
    match format {
        LogFormat::Jsonl => {
            for (i, text) in BufReader::new(reader).lines().enumerate() {
                let line = i as u64 + 1;
                let text = text?;
                if text.trim().is_empty() {
                    continue;
                }
                let record = parse_json_line(&text, line)?;
                guard.check(&record, line)?;
                out.push(record);
            }
        }
        LogFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .from_reader(reader);
            let mut rows = rdr.records();
            let header = match rows.next() {
                Some(h) => h.map_err(|e| malformed(1, e))?,
                None => return Ok(out),
            };
            if let Some(name) = header.iter().find(|h| !RawRecord::FIELDS.contains(h)) {
                return Err(IngestError::UnknownField {
                    line: 1,
                    name: name.to_string(),
                });
            }
            if !header.iter().eq(RawRecord::FIELDS) {
                return Err(malformed(
                    1,
                    format!("header must be exactly {}", RawRecord::FIELDS.join(",")),
                ));
            }
            for row in rows {
                let row = row.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line());
                    malformed(line, e)
                })?;
                let line = row.position().map_or(0, |p| p.line());
                if row.len() != RawRecord::FIELDS.len() {
                    return Err(malformed(
                        line,
                        format!("expected {} fields, found {}", RawRecord::FIELDS.len(), row.len()),
                    ));
                }
                let run_index: i64 = row[4]
                    .parse()
                    .map_err(|_| malformed(line, format!("run_index {:?} is not an integer", &row[4])))?;
                let raw = RawRecord {
                    dataset_id: row[0].to_string(),
                    subject_id: row[1].to_string(),
                    model_kind: row[2].to_string(),
                    config_id: row[3].to_string(),
                    run_index,
                    test_id: row[5].to_string(),
                    true_label: row[6].to_string(),
                    predicted_label: row[7].to_string(),
                };
                let record = raw
                    .into_record()
                    .map_err(|source| IngestError::InvalidRecord { line, source })?;
                guard.check(&record, line)?;
                out.push(record);
            }
        }
    }
    Ok(out)
}

pub fn parse_log_file(source: &LogSource) -> Result<Vec<PredictionRecord>> {
    let file = File::open(&source.path).map_err(Error::io(&source.path))?;
    parse_log(file, source.format).map_err(|e| Error::Ingest {
        path: source.path.clone(),
        source: e,
    })
}

/// Parses several logs and concatenates them in argument order, rejecting
/// keys repeated across files.
pub fn parse_sources(sources: &[LogSource]) -> Result<Vec<PredictionRecord>> {
    let mut all = Vec::new();
    let mut guard = DuplicateGuard::default();
    for source in sources {
        let records = parse_log_file(source)?;
        for (i, r) in records.iter().enumerate() {
            guard.check(r, i as u64 + 1).map_err(|e| Error::Ingest {
                path: source.path.clone(),
                source: e,
            })?;
        }
        all.extend(records);
    }
    Ok(all)
}

/// Incremental log writer; CSV output starts with the mandatory header.
pub struct LogWriter<W: Write> {
    inner: LogSink<W>,
}

enum LogSink<W: Write> {
    Jsonl(W),
    Csv(Box<csv::Writer<W>>),
}

impl<W: Write> LogWriter<W> {
    pub fn new(writer: W, format: LogFormat) -> std::io::Result<Self> {
        let inner = match format {
            LogFormat::Jsonl => LogSink::Jsonl(writer),
            LogFormat::Csv => {
                let mut w = csv::Writer::from_writer(writer);
                w.write_record(RawRecord::FIELDS).map_err(csv_io)?;
                LogSink::Csv(Box::new(w))
            }
        };
        Ok(LogWriter { inner })
    }

    pub fn write(&mut self, r: &PredictionRecord) -> std::io::Result<()> {
        match &mut self.inner {
            LogSink::Jsonl(w) => {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n")
            }
            LogSink::Csv(w) => {
                let run = r.run_index.to_string();
                w.write_record([
                    r.dataset_id.as_str(),
                    &r.subject_id,
                    r.model_kind.as_str(),
                    &r.config_id,
                    &run,
                    &r.test_id,
                    &r.true_label,
                    &r.predicted_label,
                ])
                .map_err(csv_io)
            }
        }
    }

    pub fn finish(self) -> std::io::Result<W> {
        match self.inner {
            LogSink::Jsonl(mut w) => {
                w.flush()?;
                Ok(w)
            }
            LogSink::Csv(w) => w.into_inner().map_err(|e| e.into_error()),
        }
    }
}

pub(crate) fn csv_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

/// Serializes records to a log in memory.
pub fn write_log(records: &[PredictionRecord], format: LogFormat) -> Vec<u8> {
    let mut w = LogWriter::new(Vec::new(), format).expect("in-memory write");
    for r in records {
        w.write(r).expect("in-memory write");
    }
    w.finish().expect("in-memory write")
}

pub fn write_log_file(path: &Path, records: &[PredictionRecord], format: LogFormat) -> Result<()> {
    std::fs::write(path, write_log(records, format)).map_err(Error::io(path))
}
