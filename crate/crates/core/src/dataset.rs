//! Measurement datasets as CSV, and JSON run manifests.
//!
//! Dataset schema, one row per minute:
//!
//! ```text
//! timestamp_s,temperature_c,lte_ppm,tone_ppm,true_ppm
//! ```
//!
//! `timestamp_s` is the second of the day and wraps at midnight. Missing ppm
//! cells are empty. Numbers use the shortest decimal form that parses back to
//! the same `f64`, so a write/read/write cycle is byte-stable.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clock::Ppm;
use crate::error::{Error, Result};
use crate::estimate::SECONDS_PER_DAY;

pub const HEADER: [&str; 5] = ["timestamp_s", "temperature_c", "lte_ppm", "tone_ppm", "true_ppm"];
pub const VERSION: &str = concat!("clocklab-v", env!("CARGO_PKG_VERSION"));
/// A backwards step larger than this is read as a midnight rollover.
const ROLLOVER_DROP_S: f64 = SECONDS_PER_DAY / 2.0;
pub const CADENCE_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub timestamp_s: f64,
    pub temperature_c: f64,
    pub lte_ppm: Option<Ppm>,
    pub tone_ppm: Option<Ppm>,
    pub true_ppm: Option<Ppm>,
}

impl MeasurementRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..SECONDS_PER_DAY).contains(&self.timestamp_s) {
            return Err(Error::invalid(format!("timestamp {} is not a second of the day", self.timestamp_s)));
        }
        if !self.temperature_c.is_finite() {
            return Err(Error::invalid("temperature must be finite"));
        }
        if self.lte_ppm.is_none() && self.tone_ppm.is_none() && self.true_ppm.is_none() {
            return Err(Error::invalid("record has no ppm column"));
        }
        Ok(())
    }
}

/// Seconds elapsed since the first record, unwrapping midnight rollovers.
pub fn elapsed_seconds(records: &[MeasurementRecord]) -> Vec<f64> {
    let mut out = Vec::with_capacity(records.len());
    let mut day = 0.0;
    let mut prev: Option<f64> = None;
    for r in records {
        if let Some(p) = prev {
            if p - r.timestamp_s > ROLLOVER_DROP_S {
                day += SECONDS_PER_DAY;
            }
        }
        prev = Some(r.timestamp_s);
        out.push(day + r.timestamp_s);
    }
    if let Some(&first) = out.first() {
        out.iter_mut().for_each(|t| *t -= first);
    }
    out
}

/// Indices `i` where the step from row `i − 1` is not one minute.
pub fn find_gaps(records: &[MeasurementRecord]) -> Vec<usize> {
    let t = elapsed_seconds(records);
    (1..t.len()).filter(|&i| (t[i] - t[i - 1] - CADENCE_S).abs() > 1e-6).collect()
}

fn check_order(records: &[MeasurementRecord], path: &Path) -> Result<()> {
    for (i, w) in records.windows(2).enumerate() {
        let drop = w[0].timestamp_s - w[1].timestamp_s;
        if (0.0..=ROLLOVER_DROP_S).contains(&drop) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 3,
                msg: format!("timestamp {} does not advance past {}", w[1].timestamp_s, w[0].timestamp_s),
            });
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<Ppm>) -> String {
    v.map(|p| p.value().to_string()).unwrap_or_default()
}

/// Canonical CSV bytes for `records`.
pub fn to_csv_bytes(records: &[MeasurementRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv encoding failed: {e}"));
    w.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        r.validate()?;
        w.write_record([
            r.timestamp_s.to_string(),
            r.temperature_c.to_string(),
            fmt_opt(r.lte_ppm),
            fmt_opt(r.tone_ppm),
            fmt_opt(r.true_ppm),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))
}

pub fn write_dataset(records: &[MeasurementRecord], path: &Path) -> Result<()> {
    write_atomic(path, &to_csv_bytes(records)?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().ne(HEADER) {
        return Err(parse_err(1, format!("header must be `{}`", HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |k: usize| -> Result<f64> {
            let s = rec[k].trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("{} `{s}` is not a number", HEADER[k])))
        };
        let ppm = |k: usize| -> Result<Option<Ppm>> {
            if rec[k].trim().is_empty() {
                return Ok(None);
            }
            let v = num(k)?;
            Ppm::new(v).map(Some).map_err(|e| parse_err(line, format!("{}: {e}", HEADER[k])))
        };
        let r = MeasurementRecord {
            timestamp_s: num(0)?,
            temperature_c: num(1)?,
            lte_ppm: ppm(2)?,
            tone_ppm: ppm(3)?,
            true_ppm: ppm(4)?,
        };
        r.validate().map_err(|e| parse_err(line, e.to_string()))?;
        out.push(r);
    }
    check_order(&out, path)?;
    Ok(out)
}

/// Write through a sibling temp file and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::io(path, e))
}

/// Everything needed to re-run a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub version: String,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, seeds: BTreeMap<String, u64>) -> Self {
        Self { command: command.to_owned(), config, seeds, version: VERSION.to_owned() }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        s.push('\n');
        write_atomic(path, s.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }
}
