//! File formats: basis JSON, signal / observation / matrix CSV, and the
//! atomic writers behind every result file.
//!
//! All formats are plain text and self-describing — dimensions ride in
//! a header row — and all floats are written in shortest round-trip
//! form, so write→read is exact and equal runs produce byte-identical
//! files. Writers go through a temp-file-plus-rename so an interrupted
//! run never leaves a partial result behind.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::CMatrix;
use crate::model::{BilinearBasis, ObservationSet};

// ── Atomic writes ───────────────────────────────────────────────────────

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

/// Write `bytes` to `path` via a sibling temp file and a rename, so the
/// destination is either untouched or complete — never partial.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path)(e)
    })
}

/// Serialize `value` as pretty JSON and write it atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Read a JSON file; syntax errors carry the line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: format!("column {}: {e}", e.column()),
    })
}

// ── Basis JSON ──────────────────────────────────────────────────────────

/// On-disk shape of a basis: dimensions plus one flat row-major array of
/// `[re, im]` pairs per channel block.
#[derive(Serialize, Deserialize)]
struct BasisFile {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: usize,
    blocks: Vec<Vec<[f64; 2]>>,
}

pub fn write_basis_json(path: &Path, basis: &BilinearBasis) -> Result<()> {
    let file = BasisFile {
        m: basis.channels(),
        k: basis.taps(),
        d: basis.dim(),
        blocks: (0..basis.channels())
            .map(|m| basis.block(m).data().iter().map(|z| [z.re, z.im]).collect())
            .collect(),
    };
    write_json_atomic(path, &file)
}

pub fn read_basis_json(path: &Path) -> Result<BilinearBasis> {
    let file: BasisFile = read_json(path)?;
    let in_file = |msg: String| {
        Error::Config(format!("{}: {msg}", path.display()))
    };
    if file.blocks.len() != file.m {
        return Err(in_file(format!(
            "declares M={} but carries {} blocks",
            file.m,
            file.blocks.len()
        )));
    }
    let mut blocks = Vec::with_capacity(file.m);
    for (m, pairs) in file.blocks.iter().enumerate() {
        if pairs.len() != file.k * file.d {
            return Err(in_file(format!(
                "block {m} has {} entries, expected K·D = {}",
                pairs.len(),
                file.k * file.d
            )));
        }
        blocks.push(CMatrix::from_fn(file.k, file.d, |r, c| {
            let [re, im] = pairs[r * file.d + c];
            Complex64::new(re, im)
        }));
    }
    BilinearBasis::new(blocks).map_err(|e| in_file(e.to_string()))
}

// ── CSV helpers ─────────────────────────────────────────────────────────

fn csv_bytes(
    build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_writer(Vec::new());
    build(&mut w).map_err(|e| Error::Config(format!("csv encoding: {e}")))?;
    w.into_inner()
        .map_err(|e| Error::Config(format!("csv encoding: {e}")))
}

fn csv_records(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>> {
    let rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io_err(path)(source),
            other => parse_err(path, 0, format!("{other:?}")),
        })?;
    let mut out = Vec::new();
    for rec in rdr.into_records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if !rec.iter().all(|f| f.is_empty()) {
            out.push((line, rec));
        }
    }
    Ok(out)
}

fn parse_err(path: &Path, line: usize, msg: String) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg }
}

fn field_f64(path: &Path, line: usize, rec: &csv::StringRecord, col: usize) -> Result<f64> {
    let raw = rec
        .get(col)
        .ok_or_else(|| parse_err(path, line, format!("missing column {}", col + 1)))?;
    raw.parse().map_err(|_| {
        parse_err(path, line, format!("column {}: invalid number '{raw}'", col + 1))
    })
}

fn field_usize(path: &Path, line: usize, rec: &csv::StringRecord, col: usize) -> Result<usize> {
    let raw = rec
        .get(col)
        .ok_or_else(|| parse_err(path, line, format!("missing column {}", col + 1)))?;
    raw.parse().map_err(|_| {
        parse_err(path, line, format!("column {}: invalid integer '{raw}'", col + 1))
    })
}

fn expect_width(path: &Path, line: usize, rec: &csv::StringRecord, want: usize) -> Result<()> {
    if rec.len() != want {
        return Err(parse_err(
            path,
            line,
            format!("expected {want} columns, found {}", rec.len()),
        ));
    }
    Ok(())
}

// ── Signal CSV ──────────────────────────────────────────────────────────

/// Write one complex signal as `re,im` rows under a `re,im` header.
pub fn write_signal_csv(path: &Path, samples: &[Complex64]) -> Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["re", "im"])?;
        for z in samples {
            w.write_record([z.re.to_string(), z.im.to_string()])?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

/// Read a two-column complex signal; a leading `re,im` header row is
/// optional.
pub fn read_signal_csv(path: &Path) -> Result<Vec<Complex64>> {
    let records = csv_records(path)?;
    let mut out = Vec::with_capacity(records.len());
    for (i, (line, rec)) in records.iter().enumerate() {
        if i == 0 && rec.get(0) == Some("re") {
            expect_width(path, *line, rec, 2)?;
            continue;
        }
        expect_width(path, *line, rec, 2)?;
        out.push(Complex64::new(
            field_f64(path, *line, rec, 0)?,
            field_f64(path, *line, rec, 1)?,
        ));
    }
    if out.is_empty() {
        return Err(parse_err(path, 0, "no samples".into()));
    }
    Ok(out)
}

// ── Observation CSV ─────────────────────────────────────────────────────

/// Write an observation set: a `L,M` dimension header, then L rows of
/// 2M columns `re_1,im_1,…,re_M,im_M` (channels across, time down).
pub fn write_observations_csv(path: &Path, obs: &ObservationSet) -> Result<()> {
    obs.validate()?;
    let bytes = csv_bytes(|w| {
        w.write_record([obs.len().to_string(), obs.channels().to_string()])?;
        for t in 0..obs.len() {
            let mut row = Vec::with_capacity(2 * obs.channels());
            for channel in &obs.outputs {
                row.push(channel[t].re.to_string());
                row.push(channel[t].im.to_string());
            }
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

/// Read an observation set. The noise level is not part of the format,
/// so `sigma_w` comes back unknown.
pub fn read_observations_csv(path: &Path) -> Result<ObservationSet> {
    let records = csv_records(path)?;
    let (head_line, head) = records
        .first()
        .ok_or_else(|| parse_err(path, 0, "empty file".into()))?;
    expect_width(path, *head_line, head, 2)?;
    let l = field_usize(path, *head_line, head, 0)?;
    let m = field_usize(path, *head_line, head, 1)?;
    if records.len() - 1 != l {
        return Err(parse_err(
            path,
            *head_line,
            format!("header declares L={l} but file has {} data rows", records.len() - 1),
        ));
    }
    let mut outputs = vec![Vec::with_capacity(l); m];
    for (line, rec) in &records[1..] {
        expect_width(path, *line, rec, 2 * m)?;
        for (ch, out) in outputs.iter_mut().enumerate() {
            out.push(Complex64::new(
                field_f64(path, *line, rec, 2 * ch)?,
                field_f64(path, *line, rec, 2 * ch + 1)?,
            ));
        }
    }
    let obs = ObservationSet { outputs, sigma_w: None };
    obs.validate()?;
    Ok(obs)
}

// ── Matrix CSV ──────────────────────────────────────────────────────────

/// Write a complex matrix: a `rows,cols` header, then one row per matrix
/// row with interleaved `re,im` entries.
pub fn write_matrix_csv(path: &Path, mat: &CMatrix) -> Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record([mat.rows().to_string(), mat.cols().to_string()])?;
        for r in 0..mat.rows() {
            let mut row = Vec::with_capacity(2 * mat.cols());
            for z in mat.row(r) {
                row.push(z.re.to_string());
                row.push(z.im.to_string());
            }
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    write_atomic(path, &bytes)
}

pub fn read_matrix_csv(path: &Path) -> Result<CMatrix> {
    let records = csv_records(path)?;
    let (head_line, head) = records
        .first()
        .ok_or_else(|| parse_err(path, 0, "empty file".into()))?;
    expect_width(path, *head_line, head, 2)?;
    let rows = field_usize(path, *head_line, head, 0)?;
    let cols = field_usize(path, *head_line, head, 1)?;
    if records.len() - 1 != rows {
        return Err(parse_err(
            path,
            *head_line,
            format!(
                "header declares {rows} rows but file has {} data rows",
                records.len() - 1
            ),
        ));
    }
    let mut mat = CMatrix::zeros(rows, cols);
    for (r, (line, rec)) in records[1..].iter().enumerate() {
        expect_width(path, *line, rec, 2 * cols)?;
        for c in 0..cols {
            mat[(r, c)] = Complex64::new(
                field_f64(path, *line, rec, 2 * c)?,
                field_f64(path, *line, rec, 2 * c + 1)?,
            );
        }
    }
    Ok(mat)
}

// ── Tests ───────────────────────────────────────────────────────────────
