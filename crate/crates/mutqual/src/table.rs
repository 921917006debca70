//! Quality table: `dataset_id,subject_id,config_id,family_id,s_m,iq,eq`.
//!
//! Scores are written with 12 significant digits; `eq` is empty when the
//! subject had no faulty model.

use std::io::{Read, Write};
use std::path::Path;

use mutqual_core::domain::MutantQuality;
use mutqual_core::numfmt::{fmt_sig, quantize};

use crate::error::{Error, Result};
use crate::ingest::csv_io;

pub const QUALITY_HEADER: [&str; 7] = [
    "dataset_id",
    "subject_id",
    "config_id",
    "family_id",
    "s_m",
    "iq",
    "eq",
];

pub fn write_quality_csv<W: Write>(writer: W, qualities: &[MutantQuality]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(QUALITY_HEADER).map_err(csv_io)?;
    for q in qualities {
        let eq = q.eq.map(fmt_sig).unwrap_or_default();
        w.write_record([
            q.dataset_id.as_str(),
            &q.subject_id,
            &q.config_id,
            &q.family_id,
            &fmt_sig(q.s_m),
            &fmt_sig(q.iq),
            &eq,
        ])
        .map_err(csv_io)?;
    }
    w.flush()
}

pub fn quality_csv_bytes(qualities: &[MutantQuality]) -> Vec<u8> {
    let mut out = Vec::new();
    write_quality_csv(&mut out, qualities).expect("in-memory write");
    out
}

/// Parses a quality table; `origin` labels error messages.
pub fn read_quality_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<MutantQuality>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::bad_file(origin, e))?;
    if !header.iter().eq(QUALITY_HEADER) {
        return Err(Error::bad_file(
            origin,
            format!("header must be exactly {}", QUALITY_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::bad_file(origin, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().ok().filter(|v| (0.0..=1.0).contains(v)).ok_or_else(|| {
                Error::bad_file(
                    origin,
                    format!("line {line}: {} {:?} is not a number in [0, 1]", QUALITY_HEADER[i], &row[i]),
                )
            })
        };
        out.push(MutantQuality {
            dataset_id: row[0].to_string(),
            subject_id: row[1].to_string(),
            config_id: row[2].to_string(),
            family_id: row[3].to_string(),
            s_m: num(4)?,
            iq: num(5)?,
            eq: if row[6].is_empty() { None } else { Some(num(6)?) },
        });
    }
    Ok(out)
}

pub fn read_quality_file(path: &Path) -> Result<Vec<MutantQuality>> {
    let file = std::fs::File::open(path).map_err(Error::io(path))?;
    read_quality_csv(file, path)
}

/// Rounds every score to what the quality table stores.
pub fn quantized(qualities: &[MutantQuality]) -> Vec<MutantQuality> {
    qualities
        .iter()
        .map(|q| MutantQuality {
            s_m: quantize(q.s_m),
            iq: quantize(q.iq),
            eq: q.eq.map(quantize),
            ..q.clone()
        })
        .collect()
}
