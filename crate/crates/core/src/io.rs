//! File formats: sample CSV, truth JSON, per-step JSONL records and the
//! analysis CSVs.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analyze::{ContributionRecord, ErrorTrace};
use crate::dictionary::Sample;
use crate::error::{BrslError, Result};
use crate::posterior::PosteriorState;
use crate::recursion::StepOutcome;

/// Column counts of a sample CSV with header `t,x1..x{n},y1..y{m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvLayout {
    pub n_states: usize,
    pub n_outputs: usize,
}

impl CsvLayout {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=self.n_states).map(|i| format!("x{i}")));
        h.extend((1..=self.n_outputs).map(|i| format!("y{i}")));
        h
    }

    /// Checks a header row and returns its layout.
    pub fn parse_header<S: AsRef<str>>(fields: &[S]) -> Result<Self> {
        let fields: Vec<&str> = fields.iter().map(|f| f.as_ref().trim()).collect();
        if fields.first() != Some(&"t") {
            return Err(BrslError::Parse(format!("header must start with `t`, got {fields:?}")));
        }
        let n_states = fields[1..].iter().take_while(|f| f.starts_with('x')).count();
        let layout = Self {
            n_states,
            n_outputs: fields.len() - 1 - n_states,
        };
        if n_states == 0 || layout.n_outputs == 0 || layout.header() != fields {
            return Err(BrslError::Parse(format!(
                "header must be t,x1..xn,y1..ym with n, m >= 1; got {fields:?}"
            )));
        }
        Ok(layout)
    }

    /// Parses one data row; `line` is reported in errors (1-based, header
    /// is line 1).
    pub fn parse_row<S: AsRef<str>>(&self, fields: &[S], line: u64) -> Result<Sample> {
        let expected = 1 + self.n_states + self.n_outputs;
        if fields.len() != expected {
            return Err(BrslError::Parse(format!(
                "line {line}: {} fields, expected {expected}",
                fields.len()
            )));
        }
        let mut values = Vec::with_capacity(expected);
        for f in fields {
            let f = f.as_ref().trim();
            let v: f64 = f
                .parse()
                .map_err(|_| BrslError::Parse(format!("line {line}: cannot parse {f:?} as a number")))?;
            if !v.is_finite() {
                return Err(BrslError::Parse(format!("line {line}: non-finite value {f:?}")));
            }
            values.push(v);
        }
        Ok(Sample::new(
            values[0],
            values[1..1 + self.n_states].to_vec(),
            values[1 + self.n_states..].to_vec(),
        ))
    }
}

/// Reads a whole sample CSV, requiring strictly increasing timestamps.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<(CsvLayout, Vec<Sample>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let layout = CsvLayout::parse_header(&header)?;
    let mut samples: Vec<Sample> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        let s = layout.parse_row(&fields, i as u64 + 2)?;
        if let Some(prev) = samples.last() {
            if s.timestamp <= prev.timestamp {
                return Err(BrslError::Parse(format!(
                    "line {}: timestamp {} does not exceed {}",
                    i + 2,
                    s.timestamp,
                    prev.timestamp
                )));
            }
        }
        samples.push(s);
    }
    Ok((layout, samples))
}

pub fn read_samples_csv_path(path: &Path) -> Result<(CsvLayout, Vec<Sample>)> {
    let file = std::fs::File::open(path)
        .map_err(|e| BrslError::Io(format!("{}: {e}", path.display())))?;
    read_samples_csv(std::io::BufReader::new(file))
}

/// Writes samples with the standard header. Numbers use the shortest
/// representation that round-trips.
pub fn write_samples_csv<W: Write>(writer: W, samples: &[Sample]) -> Result<()> {
    let first = samples
        .first()
        .ok_or_else(|| BrslError::InvalidConfig("no samples to write".into()))?;
    let layout = CsvLayout {
        n_states: first.state.len(),
        n_outputs: first.observation.len(),
    };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(layout.header())?;
    for s in samples {
        if s.state.len() != layout.n_states || s.observation.len() != layout.n_outputs {
            return Err(BrslError::DimensionMismatch(format!("sample at t={} has a different layout", s.timestamp)));
        }
        let row: Vec<String> = std::iter::once(s.timestamp)
            .chain(s.state.iter().copied())
            .chain(s.observation.iter().copied())
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(writer, value)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, R: Read>(reader: R) -> Result<T> {
    Ok(serde_json::from_reader(reader)?)
}

/// One JSONL line per recursion step. Wall-clock time is deliberately
/// absent so identical runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub timestamp: f64,
    pub accepted: bool,
    pub flagged: bool,
    pub deferred: bool,
    pub refreshed: bool,
    pub reason: Option<String>,
    pub classification: String,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub kappa_tolerance: f64,
    pub new_samples: usize,
    pub forgotten: usize,
    pub posterior_version: u64,
    pub sample_count: usize,
    /// Root-mean-square residual of the incoming batch under the posterior
    /// after this step, per output.
    pub batch_rmse: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub std_devs: Vec<Vec<f64>>,
    pub local_scales: Vec<Vec<f64>>,
    pub global_scale: f64,
    pub noise_variances: Vec<f64>,
}

impl StepRecord {
    pub fn new(outcome: &StepOutcome, posterior: &PosteriorState, batch: &[Sample]) -> Result<Self> {
        let snap = posterior.snapshot();
        let mut sq = vec![0.0; posterior.n_outputs()];
        for s in batch {
            let (pred, _) = posterior.predict(&s.state)?;
            for ((acc, p), y) in sq.iter_mut().zip(pred).zip(&s.observation) {
                *acc += (y - p) * (y - p);
            }
        }
        let batch_rmse = if batch.is_empty() {
            vec![0.0; sq.len()]
        } else {
            sq.iter().map(|v| (v / batch.len() as f64).sqrt()).collect()
        };
        Ok(Self {
            step: outcome.step,
            timestamp: outcome.timestamp,
            accepted: outcome.accepted,
            flagged: outcome.flagged,
            deferred: outcome.deferred,
            refreshed: outcome.refreshed,
            reason: outcome.reason.clone(),
            classification: outcome.utility.classification.as_str().to_string(),
            kappa_min: outcome.utility.kappa_min(),
            kappa_max: outcome.utility.kappa_max(),
            kappa_tolerance: outcome.utility.tolerance,
            new_samples: outcome.new_samples,
            forgotten: outcome.forgotten,
            posterior_version: outcome.posterior_after,
            sample_count: snap.sample_count,
            batch_rmse,
            means: snap.means,
            std_devs: snap.std_devs,
            local_scales: snap.local_scales,
            global_scale: snap.global_scale,
            noise_variances: snap.noise_variances,
        })
    }

    /// True when every number in the record is finite.
    pub fn is_finite(&self) -> bool {
        let nested = |v: &Vec<Vec<f64>>| v.iter().flatten().all(|x| x.is_finite());
        [self.timestamp, self.kappa_min, self.kappa_max, self.kappa_tolerance, self.global_scale]
            .iter()
            .all(|x| x.is_finite())
            && self.batch_rmse.iter().all(|x| x.is_finite())
            && self.noise_variances.iter().all(|x| x.is_finite())
            && nested(&self.means)
            && nested(&self.std_devs)
            && nested(&self.local_scales)
    }

    pub fn write_line<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// `t,norm,o{j}_{label}...` with one row per scored estimate.
pub fn write_error_trace_csv<W: Write>(writer: W, trace: &ErrorTrace, labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n_out = trace.records.first().map_or(0, |r| r.abs_errors.len());
    let mut header = vec!["t".to_string(), "error_norm".to_string(), "regime_switch".to_string()];
    for j in 0..n_out {
        header.extend(labels.iter().map(|l| format!("y{}:{l}", j + 1)));
    }
    w.write_record(&header)?;
    for (i, r) in trace.records.iter().enumerate() {
        let mut row = vec![
            r.timestamp.to_string(),
            r.error_norm.to_string(),
            (trace.regime_switches.contains(&i) as u8).to_string(),
        ];
        row.extend(r.abs_errors.iter().flatten().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format contributions: `t,output,term,raw,centered`.
pub fn write_contributions_csv<W: Write>(writer: W, rows: &[(f64, ContributionRecord)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "output", "term", "raw", "centered"])?;
    for (t, rec) in rows {
        for (j, (raw, cen)) in rec.raw.iter().zip(&rec.centered).enumerate() {
            for (i, label) in rec.labels.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    format!("y{}", j + 1),
                    label.clone(),
                    raw[i].to_string(),
                    cen[i].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
