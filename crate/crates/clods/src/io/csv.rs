//! Minimal CSV: comma-separated, one header row, no quoting. Every value
//! the pipeline logs is a number or a bare identifier, so quoting rules
//! never come into play; writes reject values that would need them.

use std::path::Path;

use crate::error::{Error, Result};

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::ShapeMismatch(format!(
                "csv row {i} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        for field in row {
            if field.contains(',') || field.contains('\n') || field.contains('"') {
                return Err(Error::InvalidInput(format!(
                    "csv field {field:?} needs quoting, which this writer does not do"
                )));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::DataMissing(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty csv", path.display())))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(str::to_owned).collect();
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "{}:{}: {} fields, header has {}",
                path.display(),
                i + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let rows = vec![
            vec!["1".into(), "0.25".into(), "0.03125".into()],
            vec!["2".into(), "0.125".into(), "0.015625".into()],
        ];
        write_csv(&path, &["epoch", "node_loss", "holdout_rmse"], &rows).unwrap();
        let (header, back) = read_csv(&path).unwrap();
        assert_eq!(header, ["epoch", "node_loss", "holdout_rmse"]);
        assert_eq!(back, rows);
    }

    #[test]
    fn ragged_rows_are_rejected_both_ways() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let err = write_csv(&path, &["a", "b"], &[vec!["1".into()]]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
        std::fs::write(&path, "a,b\n1\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Format(_))));
    }

    #[test]
    fn fields_needing_quotes_are_refused() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let err = write_csv(&path, &["a"], &[vec!["x,y".into()]]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
