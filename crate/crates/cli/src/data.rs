//! Numeric CSV in and out.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;

/// Reads a comma-separated numeric table. A first row containing any
/// non-numeric field is taken as a header; missing values are rejected.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(_) => bail!("{}: non-numeric value on line {}", path.display(), line + 1),
        }
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let k = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != k) {
        bail!("{}: data row {} has {} columns, expected {k}", path.display(), i + 1, rows[i].len());
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        bail!("{}: values must be finite", path.display());
    }
    Ok(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
}

/// Writes `x1,...,xk` then one row per observation, floats at 17
/// significant digits.
pub fn write_matrix<W: Write>(out: W, values: &DMatrix<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record((1..=values.ncols()).map(|j| format!("x{j}")))?;
    for row in values.row_iter() {
        writer.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    writer.flush()?;
    Ok(())
}

/// One starting point per line, comma-separated tail coefficients.
pub fn read_seeds(path: &Path, q: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seeds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let seed = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        if seed.len() != q {
            bail!("{}: line {} has {} coefficients, expected q = {q}", path.display(), i + 1, seed.len());
        }
        seeds.push(seed);
    }
    if seeds.is_empty() {
        bail!("{}: no seeds", path.display());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_is_optional() {
        let a = read_matrix(temp("x1,x2\n1,2\n3.5,-4e-1\n").path()).unwrap();
        let b = read_matrix(temp("1,2\n3.5,-4e-1\n").path()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.5, -0.4]));
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(read_matrix(temp("1,2\n3\n").path()).is_err());
        assert!(read_matrix(temp("1,2\n3,x\n").path()).is_err());
        assert!(read_matrix(temp("1,2\n3,\n").path()).is_err());
        assert!(read_matrix(temp("a,b\n").path()).is_err());
    }

    #[test]
    fn written_values_read_back_exactly() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -1.0 / 3.0, 1e-300, 12345.678]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert!(buf.starts_with(b"x1,x2\n"));
        let f = temp(std::str::from_utf8(&buf).unwrap());
        assert_eq!(read_matrix(f.path()).unwrap(), m);
    }

    #[test]
    fn seeds_must_match_the_order() {
        assert_eq!(read_seeds(temp("0.1, 0.2\n# c\n\n-0.3,0\n").path(), 2).unwrap().len(), 2);
        assert!(read_seeds(temp("0.1\n").path(), 2).is_err());
    }
}
