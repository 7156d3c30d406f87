//! Feature and label file formats.
//!
//! * CSV: header `f0,...,f{d-1},label`, one sample per row.
//! * SDFT binary: `b"SDFT"`, u32 LE rows, u32 LE cols, then rows·cols f32 LE
//!   values in row-major order. Labels live in a separate CSV with a single
//!   `label` column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const SDFT_MAGIC: &[u8; 4] = b"SDFT";
const SDFT_HEADER: usize = 12;

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::parse(line, format!("{other:?}")),
    }
}

fn parse_label(field: &str, line: usize) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::parse(line, format!("label {field:?} is not a non-negative integer")))
}

/// Read a feature CSV into (N×d features, labels).
pub fn read_feature_csv<R: Read>(reader: R) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let cols = header.len();
    if cols < 2 {
        return Err(Error::parse(1, "header needs at least one feature and a label"));
    }
    let d = cols - 1;
    for (j, name) in header.iter().take(d).enumerate() {
        if name.trim() != format!("f{j}") {
            return Err(Error::parse(1, format!("column {j} must be named f{j}, found {name:?}")));
        }
    }
    if header[d].trim() != "label" {
        return Err(Error::parse(1, "last column must be named label"));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = i + 2;
        if rec.len() != cols {
            return Err(Error::parse(line, format!("expected {cols} fields, found {}", rec.len())));
        }
        for field in rec.iter().take(d) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("{field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(line, "features must be finite"));
            }
            values.push(v);
        }
        labels.push(parse_label(&rec[d], line)?);
    }
    if labels.is_empty() {
        return Err(Error::parse(2, "no samples"));
    }
    Ok((DMatrix::from_row_slice(labels.len(), d, &values), labels))
}

pub fn write_feature_csv<W: Write>(writer: W, features: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
    if features.nrows() != labels.len() {
        return Err(Error::invalid("one label per feature row is required"));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..features.ncols()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_error)?;
    for (i, &label) in labels.iter().enumerate() {
        let mut row: Vec<String> = features.row(i).iter().map(|v| format!("{v:?}")).collect();
        row.push(label.to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Decode an SDFT buffer. The declared shape must match the payload exactly.
pub fn parse_sdft(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < SDFT_HEADER {
        return Err(Error::parse(0, "truncated SDFT header"));
    }
    if &bytes[..4] != SDFT_MAGIC {
        return Err(Error::parse(0, "missing SDFT magic"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[SDFT_HEADER..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::parse(0, "SDFT shape overflows"))?;
    if payload.len() != expected {
        return Err(Error::parse(
            0,
            format!("SDFT declares {rows}×{cols} but carries {} bytes of data", payload.len()),
        ));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::parse(0, "SDFT matrix is empty"));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::parse(0, "SDFT contains a non-finite value"));
        }
        values.push(f64::from(v));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn read_sdft<R: Read>(mut reader: R) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse_sdft(&bytes)
}

/// Encode features as SDFT (values are stored as f32).
pub fn write_sdft<W: Write>(mut writer: W, features: &DMatrix<f64>) -> Result<()> {
    let rows = u32::try_from(features.nrows()).map_err(|_| Error::invalid("too many rows for SDFT"))?;
    let cols = u32::try_from(features.ncols()).map_err(|_| Error::invalid("too many columns for SDFT"))?;
    writer.write_all(SDFT_MAGIC)?;
    writer.write_all(&rows.to_le_bytes())?;
    writer.write_all(&cols.to_le_bytes())?;
    for i in 0..features.nrows() {
        for j in 0..features.ncols() {
            writer.write_all(&(features[(i, j)] as f32).to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Labels CSV with a single `label` column.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() != 1 || header[0].trim() != "label" {
        return Err(Error::parse(1, "labels file must have a single label column"));
    }
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        if rec.len() != 1 {
            return Err(Error::parse(i + 2, "expected one field"));
        }
        labels.push(parse_label(&rec[0], i + 2)?);
    }
    Ok(labels)
}

pub fn write_labels_csv<W: Write>(writer: W, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["label"]).map_err(csv_error)?;
    for l in labels {
        w.write_record([l.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Class → superclass map as CSV with header `class,superclass`.
pub fn read_superclass_csv<R: Read>(reader: R) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() != 2 || header[0].trim() != "class" || header[1].trim() != "superclass" {
        return Err(Error::parse(1, "superclass file must have columns class,superclass"));
    }
    let mut pairs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        if rec.len() != 2 {
            return Err(Error::parse(i + 2, "expected two fields"));
        }
        pairs.push((parse_label(&rec[0], i + 2)?, parse_label(&rec[1], i + 2)?));
    }
    let classes = pairs.len();
    let mut map = vec![usize::MAX; classes];
    for (line, (c, s)) in pairs.into_iter().enumerate() {
        if c >= classes || map[c] != usize::MAX {
            return Err(Error::parse(line + 2, format!("class {c} is out of range or repeated")));
        }
        map[c] = s;
    }
    Ok(map)
}

/// `features.sdft` → `features.labels.csv`.
pub fn sibling_labels_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.labels.csv"))
}

/// Load features and labels from a `.csv` file or an SDFT file with its sibling labels.
pub fn load_features(path: &Path) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return read_feature_csv(BufReader::new(File::open(path)?));
    }
    let features = read_sdft(BufReader::new(File::open(path)?))?;
    let labels = read_labels_csv(BufReader::new(File::open(sibling_labels_path(path))?))?;
    if labels.len() != features.nrows() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    Ok((features, labels))
}

pub fn save_sdft_with_labels(path: &Path, features: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
    write_sdft(BufWriter::new(File::create(path)?), features)?;
    write_labels_csv(BufWriter::new(File::create(sibling_labels_path(path))?), labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let x = DMatrix::from_row_slice(2, 3, &[0.1, -2.0, 3.5, 1e-7, 0.0, 42.0]);
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &x, &[2, 0]).unwrap();
        assert!(buf.starts_with(b"f0,f1,f2,label\n"));
        let (y, labels) = read_feature_csv(&buf[..]).unwrap();
        assert_eq!(x, y);
        assert_eq!(labels, vec![2, 0]);
    }

    #[test]
    fn csv_rejects_bad_header_and_values() {
        assert!(read_feature_csv(&b"a,label\n1,0\n"[..]).is_err());
        assert!(read_feature_csv(&b"f0,label\nx,0\n"[..]).is_err());
        assert!(read_feature_csv(&b"f0,label\n1,-1\n"[..]).is_err());
        assert!(read_feature_csv(&b"f0,label\n1,0,3\n"[..]).is_err());
        assert!(read_feature_csv(&b"f0,label\nNaN,0\n"[..]).is_err());
        assert!(read_feature_csv(&b"f0,label\n"[..]).is_err());
    }

    #[test]
    fn sdft_round_trip_and_validation() {
        let x = DMatrix::from_row_slice(2, 2, &[1.5, -0.25, 3.0, 8.0]);
        let mut buf = Vec::new();
        write_sdft(&mut buf, &x).unwrap();
        assert_eq!(&buf[..4], b"SDFT");
        assert_eq!(buf.len(), 12 + 16);
        assert_eq!(parse_sdft(&buf).unwrap(), x);
        assert!(parse_sdft(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(parse_sdft(&bad).is_err());
        let mut huge = buf[..12].to_vec();
        huge[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(parse_sdft(&huge).is_err());
    }

    #[test]
    fn labels_and_superclasses() {
        assert_eq!(read_labels_csv(&b"label\n3\n0\n"[..]).unwrap(), vec![3, 0]);
        assert!(read_labels_csv(&b"y\n3\n"[..]).is_err());
        let map = read_superclass_csv(&b"class,superclass\n1,0\n0,0\n2,1\n"[..]).unwrap();
        assert_eq!(map, vec![0, 0, 1]);
        assert!(read_superclass_csv(&b"class,superclass\n0,0\n0,1\n"[..]).is_err());
    }

    #[test]
    fn sibling_path() {
        assert_eq!(
            sibling_labels_path(Path::new("/a/feat.sdft")),
            PathBuf::from("/a/feat.labels.csv")
        );
    }
}
