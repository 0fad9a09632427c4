//! File formats for panels, spectra and corruption signatures.
//!
//! Binary panels (`RTSP`) and spectra (`RTSM`) share a header layout:
//!
//! ```text
//! magic [u8; 4] | version u32 | dims u64 | count u64 | labels (u32 len + UTF-8) × dims
//! ```
//!
//! followed for panels by `dt: f64` and `count × dims` samples, row-major
//! (one time step after another), and for spectra by `count` frequencies,
//! `count` validity bytes and `count × dims × dims` `(re, im)` pairs,
//! row-major per frequency. Everything is little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::corruption::CorruptionSignature;
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;
use crate::spectral::{FrequencyGrid, SpectralMatrix};

pub const PANEL_MAGIC: &[u8; 4] = b"RTSP";
pub const SPECTRUM_MAGIC: &[u8; 4] = b"RTSM";
const FORMAT_VERSION: u32 = 1;
const MAX_LABEL_BYTES: u32 = 1 << 16;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(|f| BufWriter::with_capacity(1 << 20, f))
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(|f| BufReader::with_capacity(1 << 20, f))
        .map_err(|e| Error::io(path, e))
}

fn read_error(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Data(format!("{}: file is truncated", path.display()))
    } else {
        Error::io(path, e)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// True if the file starts with the binary panel magic.
pub fn is_binary_panel(path: impl AsRef<Path>) -> Result<bool> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    let mut f = open(path)?;
    match f.read_exact(&mut head) {
        Ok(()) => Ok(&head == PANEL_MAGIC),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Panel as CSV: a header row of labels, then one row per sample.
pub fn write_panel_csv(panel: &TimeSeriesPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(panel.labels()).map_err(|e| csv_error(path, e))?;
    let mut row = Vec::with_capacity(panel.channel_count());
    for t in 0..panel.len() {
        row.clear();
        row.extend(panel.channels().iter().map(|c| format!("{:e}", c[t])));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV panel. The sample interval is not stored and is set to `dt`.
pub fn read_panel_csv(path: impl AsRef<Path>, dt: f64) -> Result<TimeSeriesPanel> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let labels: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut channels = vec![Vec::new(); labels.len()];
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {}: {field:?} is not a number",
                    path.display(),
                    line + 2
                ))
            })?;
            channels[c].push(v);
        }
    }
    TimeSeriesPanel::new(channels, labels, dt)
}

fn write_labels(w: &mut impl Write, labels: &[String]) -> std::io::Result<()> {
    for l in labels {
        w.write_u32::<LittleEndian>(l.len() as u32)?;
        w.write_all(l.as_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read, magic: &[u8; 4], path: &Path) -> Result<(usize, usize, Vec<String>)> {
    let io = |e| read_error(path, e);
    let mut head = [0u8; 4];
    r.read_exact(&mut head).map_err(io)?;
    if &head != magic {
        return Err(Error::Data(format!(
            "{}: expected magic {:?}",
            path.display(),
            std::str::from_utf8(magic).unwrap_or("?")
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported format version {version}",
            path.display()
        )));
    }
    let dims = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let count = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    if dims > 1 << 16 {
        return Err(Error::Data(format!("{}: implausible dimension {dims}", path.display())));
    }
    let mut labels = Vec::with_capacity(dims);
    for _ in 0..dims {
        let len = r.read_u32::<LittleEndian>().map_err(io)?;
        if len > MAX_LABEL_BYTES {
            return Err(Error::Data(format!("{}: label too long", path.display())));
        }
        let mut buf = vec![0u8; len as usize];
        r.read_exact(&mut buf).map_err(io)?;
        labels.push(
            String::from_utf8(buf)
                .map_err(|_| Error::Data(format!("{}: label is not UTF-8", path.display())))?,
        );
    }
    Ok((dims, count, labels))
}

pub fn write_panel_binary(panel: &TimeSeriesPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    w.write_all(PANEL_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io)?;
    w.write_u64::<LittleEndian>(panel.channel_count() as u64).map_err(io)?;
    w.write_u64::<LittleEndian>(panel.len() as u64).map_err(io)?;
    write_labels(&mut w, panel.labels()).map_err(io)?;
    w.write_f64::<LittleEndian>(panel.dt()).map_err(io)?;
    for t in 0..panel.len() {
        for c in panel.channels() {
            w.write_f64::<LittleEndian>(c[t]).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_panel_binary(path: impl AsRef<Path>) -> Result<TimeSeriesPanel> {
    let path = path.as_ref();
    let io = |e| read_error(path, e);
    let mut r = open(path)?;
    let (dims, count, labels) = read_header(&mut r, PANEL_MAGIC, path)?;
    let dt = r.read_f64::<LittleEndian>().map_err(io)?;
    let expected = (count as u64)
        .checked_mul(dims as u64 * 8)
        .ok_or_else(|| Error::Data(format!("{}: header sizes overflow", path.display())))?;
    let on_disk = std::fs::metadata(path).map_err(io)?.len();
    if on_disk < expected {
        return Err(Error::Data(format!(
            "{}: truncated, header promises {count} samples",
            path.display()
        )));
    }
    let mut channels = vec![Vec::with_capacity(count); dims];
    let mut row = vec![0.0; dims];
    for _ in 0..count {
        r.read_f64_into::<LittleEndian>(&mut row).map_err(io)?;
        for (c, v) in channels.iter_mut().zip(&row) {
            c.push(*v);
        }
    }
    TimeSeriesPanel::new(channels, labels, dt)
}

/// Writes CSV for `.csv` paths and the binary format otherwise.
pub fn write_panel(panel: &TimeSeriesPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if has_extension(path, "csv") {
        write_panel_csv(panel, path)
    } else {
        write_panel_binary(panel, path)
    }
}

/// Reads either panel format, detected from the magic bytes; CSV panels get
/// unit sample interval.
pub fn read_panel(path: impl AsRef<Path>) -> Result<TimeSeriesPanel> {
    let path = path.as_ref();
    if is_binary_panel(path)? {
        read_panel_binary(path)
    } else {
        read_panel_csv(path, 1.0)
    }
}

pub(crate) fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Long CSV `omega,i,j,re,im`, one row per frequency and ordered pair.
/// Invalid frequencies are written as zeros.
pub fn write_spectrum_csv(s: &SpectralMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["omega", "i", "j", "re", "im"])
        .map_err(|e| csv_error(path, e))?;
    let labels = s.labels();
    for (k, &omega) in s.grid().omegas().iter().enumerate() {
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                let z = s.entry(k, i, j);
                w.write_record([
                    format!("{omega:.17e}"),
                    labels[i].clone(),
                    labels[j].clone(),
                    format!("{:e}", z.re),
                    format!("{:e}", z.im),
                ])
                .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a long-format spectrum CSV. Labels are taken in order of first
/// appearance; frequencies whose matrix is entirely zero are marked
/// invalid.
pub fn read_spectrum_csv(path: impl AsRef<Path>) -> Result<SpectralMatrix> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut rows = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let bad = || Error::Data(format!("{}: malformed row {}", path.display(), line + 2));
        if record.len() != 5 {
            return Err(bad());
        }
        let num = |k: usize| record[k].parse::<f64>().map_err(|_| bad());
        let mut index = |l: &str| match labels.iter().position(|x| x == l) {
            Some(i) => i,
            None => {
                labels.push(l.to_string());
                labels.len() - 1
            }
        };
        let (i, j) = (index(&record[1]), index(&record[2]));
        rows.push((num(0)?, i, j, Complex64::new(num(3)?, num(4)?)));
    }
    let n = labels.len();
    let mut omegas: Vec<f64> = Vec::new();
    let mut values: Vec<DMatrix<Complex64>> = Vec::new();
    let mut filled: Vec<usize> = Vec::new();
    for (omega, i, j, z) in rows {
        if omegas.last() != Some(&omega) {
            omegas.push(omega);
            values.push(DMatrix::from_element(n, n, Complex64::new(0.0, 0.0)));
            filled.push(0);
        }
        values.last_mut().expect("pushed above")[(i, j)] = z;
        *filled.last_mut().expect("pushed above") += 1;
    }
    if filled.iter().any(|&c| c != n * n) {
        return Err(Error::Data(format!(
            "{}: every frequency needs {} entries",
            path.display(),
            n * n
        )));
    }
    let valid = values
        .iter()
        .map(|m| m.iter().any(|z| z.norm() > 0.0))
        .collect();
    SpectralMatrix::new(FrequencyGrid::new(omegas)?, values, labels)?.with_validity(valid)
}

pub fn write_spectrum_binary(s: &SpectralMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    w.write_all(SPECTRUM_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io)?;
    w.write_u64::<LittleEndian>(s.dim() as u64).map_err(io)?;
    w.write_u64::<LittleEndian>(s.grid().len() as u64).map_err(io)?;
    write_labels(&mut w, s.labels()).map_err(io)?;
    for &omega in s.grid().omegas() {
        w.write_f64::<LittleEndian>(omega).map_err(io)?;
    }
    for &v in s.validity() {
        w.write_u8(v as u8).map_err(io)?;
    }
    for m in s.values() {
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                w.write_f64::<LittleEndian>(m[(i, j)].re).map_err(io)?;
                w.write_f64::<LittleEndian>(m[(i, j)].im).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read_spectrum_binary(path: impl AsRef<Path>) -> Result<SpectralMatrix> {
    let path = path.as_ref();
    let io = |e| read_error(path, e);
    let mut r = open(path)?;
    let (n, count, labels) = read_header(&mut r, SPECTRUM_MAGIC, path)?;
    let expected = (count as u64).saturating_mul(9 + 16 * (n * n) as u64);
    if std::fs::metadata(path).map_err(io)?.len() < expected {
        return Err(Error::Data(format!("{}: truncated spectrum", path.display())));
    }
    let mut omegas = vec![0.0; count];
    r.read_f64_into::<LittleEndian>(&mut omegas).map_err(io)?;
    let mut valid = Vec::with_capacity(count);
    for _ in 0..count {
        valid.push(r.read_u8().map_err(io)? != 0);
    }
    let mut buf = vec![0.0; 2 * n * n];
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_f64_into::<LittleEndian>(&mut buf).map_err(io)?;
        values.push(DMatrix::from_fn(n, n, |i, j| {
            let at = 2 * (i * n + j);
            Complex64::new(buf[at], buf[at + 1])
        }));
    }
    SpectralMatrix::new(FrequencyGrid::new(omegas)?, values, labels)?.with_validity(valid)
}

/// Plot-ready `omega,i,j,magnitude,phase` rows for the upper triangle
/// (including the diagonal) at valid frequencies.
pub fn write_magnitude_phase_csv(s: &SpectralMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["omega", "i", "j", "magnitude", "phase"])
        .map_err(|e| csv_error(path, e))?;
    let labels = s.labels();
    for (k, &omega) in s.grid().omegas().iter().enumerate() {
        if !s.is_valid(k) {
            continue;
        }
        for i in 0..s.dim() {
            for j in i..s.dim() {
                let z = s.entry(k, i, j);
                w.write_record([
                    format!("{omega:.17e}"),
                    labels[i].clone(),
                    labels[j].clone(),
                    format!("{:e}", z.norm()),
                    format!("{:e}", z.arg()),
                ])
                .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Signature CSV `omega,h_re,h_im,d`.
pub fn write_signature_csv(
    grid: &FrequencyGrid,
    sig: &CorruptionSignature,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if sig.len() != grid.len() {
        return Err(Error::Data("signature and grid lengths differ".into()));
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["omega", "h_re", "h_im", "d"])
        .map_err(|e| csv_error(path, e))?;
    for (k, &omega) in grid.omegas().iter().enumerate() {
        w.write_record([
            format!("{omega:.17e}"),
            format!("{:e}", sig.h[k].re),
            format!("{:e}", sig.h[k].im),
            format!("{:e}", sig.d[k]),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_signature_csv(path: impl AsRef<Path>) -> Result<(FrequencyGrid, CorruptionSignature)> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let (mut omegas, mut h, mut d) = (Vec::new(), Vec::new(), Vec::new());
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let bad = || Error::Data(format!("{}: malformed row {}", path.display(), line + 2));
        if record.len() != 4 {
            return Err(bad());
        }
        let num = |k: usize| record[k].parse::<f64>().map_err(|_| bad());
        omegas.push(num(0)?);
        h.push(Complex64::new(num(1)?, num(2)?));
        d.push(num(3)?);
    }
    Ok((FrequencyGrid::new(omegas)?, CorruptionSignature { h, d }))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_text(text: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
