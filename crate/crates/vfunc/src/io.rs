//! Dataset loading and the CSV, PGM and ASCII artifact formats.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;
use vfunc_core::gridworld::VisitationMap;
use vfunc_core::regression::{Dataset1D, PredictiveBand};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: u64, message: String },
}

/// Reads two-column `x,y` rows; a non-numeric first line is taken as a header.
pub fn parse_csv(name: &str, reader: impl Read) -> Result<Dataset1D, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let parse_err = |line: u64, message: String| DataError::Parse { path: name.into(), line, message };
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let parsed: Vec<Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if i == 0 && parsed.iter().all(Result::is_err) {
            continue;
        }
        let mut values = [0.0; 2];
        for (j, (field, v)) in record.iter().zip(parsed).enumerate() {
            match v {
                Ok(v) if v.is_finite() => values[j] = v,
                _ => return Err(parse_err(line, format!("field {} `{field}` is not a finite number", j + 1))),
            }
        }
        xs.push(values[0]);
        ys.push(values[1]);
    }
    Dataset1D::new(name, xs, ys).map_err(|e| parse_err(0, e.to_string()))
}

pub fn load_csv(path: &Path) -> Result<Dataset1D, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io { path: path.into(), source })?;
    parse_csv(&path.display().to_string(), file)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn flush<W: Write>(w: csv::Writer<W>) -> io::Result<()> {
    w.into_inner().map_err(|e| e.into_error())?.flush()
}

/// One row of `metrics.csv`; a missing bound is written as an empty field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub reward_or_loglik: f64,
    pub entropy_bound: Option<f64>,
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricRow]) -> io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["step", "reward_or_loglik", "entropy_bound"])?;
    for r in rows {
        let bound = r.entropy_bound.map(|b| b.to_string()).unwrap_or_default();
        out.write_record([r.step.to_string(), r.reward_or_loglik.to_string(), bound])?;
    }
    flush(out)
}

pub fn write_band<W: Write>(w: W, band: &PredictiveBand) -> io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["x", "mean", "std"])?;
    for ((x, m), s) in band.grid_xs.iter().zip(&band.means).zip(&band.stds) {
        out.write_record([x.to_string(), m.to_string(), s.to_string()])?;
    }
    flush(out)
}

/// `rows[a][i]` is the curve for `alphas[a]` at `grid_xs[i]`.
pub fn write_interp<W: Write>(w: W, grid_xs: &[f64], alphas: &[f64], rows: &[Vec<f64>]) -> io::Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["x".to_string()];
    header.extend(alphas.iter().map(|a| format!("alpha={a}")));
    out.write_record(&header)?;
    for (i, x) in grid_xs.iter().enumerate() {
        let mut rec = vec![x.to_string()];
        rec.extend(rows.iter().map(|r| r[i].to_string()));
        out.write_record(&rec)?;
    }
    flush(out)
}

/// Plain PGM (P2) with the largest frequency mapped to 255.
pub fn write_pgm<W: Write>(mut w: W, map: &VisitationMap) -> io::Result<()> {
    let max = map.freq.iter().copied().fold(0.0, f64::max);
    writeln!(w, "P2")?;
    writeln!(w, "{} {}", map.width, map.height)?;
    writeln!(w, "255")?;
    for row in map.freq.chunks(map.width) {
        let line: Vec<String> = row
            .iter()
            .map(|f| if max > 0.0 { (f / max * 255.0).round() as u8 } else { 0 }.to_string())
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()
}

pub fn write_visitation_csv<W: Write>(w: W, map: &VisitationMap) -> io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["row", "col", "freq"])?;
    for (i, f) in map.freq.iter().enumerate() {
        out.write_record([(i / map.width).to_string(), (i % map.width).to_string(), f.to_string()])?;
    }
    flush(out)
}

/// Writes through `f` into a buffered file at `path`.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}
