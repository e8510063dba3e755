//! CSV writing and reading. Numbers are written with 17 significant digits so that a
//! value read back is bit-identical to the one written.

use std::path::Path;

use crate::error::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // `{:e}` would print NaN / inf, keep the lowercase spellings most readers accept
        x.to_string().to_lowercase()
    }
}

/// Positions or parameters of one row, `;`-separated.
pub fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(";")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    writer.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        writer.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush()?;
    Ok(())
}

/// The `value` column of a measurement file.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = headers
        .iter()
        .position(|h| h.trim() == "value")
        .ok_or_else(|| Error::Config(format!("{} has no `value` column", path.display())))?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let field = record.get(column).unwrap_or("").trim();
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Config(format!("{} row {}: `{field}` is not a number", path.display(), i + 1)))?;
        values.push(v);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let rows = vec![vec!["0".into(), fmt_f64(0.25)], vec!["1".into(), fmt_f64(-1.0 / 7.0)]];
        write_csv(&path, &["index", "value"], &rows).unwrap();
        assert_eq!(read_values(&path).unwrap(), vec![0.25, -1.0 / 7.0]);
        write_csv(&path, &["index", "reading"], &rows).unwrap();
        assert!(matches!(read_values(&path), Err(Error::Config(_))));
    }
}
