//! Comma-separated dense matrices, sparse `(row, col, value)` triplets and
//! plain label lists.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Dataset, Normalization};
use crate::error::{Error, Result};
use crate::nn::Matrix;

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::format_at(line, format!("not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::format_at(line, format!("non-finite value {field:?}")));
    }
    Ok(v)
}

fn parse_label(field: &str, line: usize) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::format_at(line, format!("not a label: {field:?}")))
}

/// Raw CSV matrix. With `has_labels` the last column holds integer labels.
pub fn read_dense_csv(path: &Path, has_labels: bool) -> Result<(Matrix, Option<Vec<usize>>)> {
    let text = fs::read_to_string(path)?;
    let mut width = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (line, content) in data_lines(&text) {
        let fields: Vec<&str> = content.split(',').collect();
        let w = *width.get_or_insert(fields.len());
        if fields.len() != w {
            return Err(Error::format_at(
                line,
                format!("expected {w} fields, found {}", fields.len()),
            ));
        }
        let (features, label) = if has_labels {
            if w < 2 {
                return Err(Error::format_at(line, "need features and a label"));
            }
            (&fields[..w - 1], Some(fields[w - 1]))
        } else {
            (&fields[..], None)
        };
        for f in features {
            data.push(parse_f64(f, line)?);
        }
        if let Some(l) = label {
            labels.push(parse_label(l, line)?);
        }
        rows += 1;
    }
    let cols = width.map_or(0, |w| if has_labels { w - 1 } else { w });
    let x = Matrix::new(rows, cols, data)?;
    Ok((x, has_labels.then_some(labels)))
}

/// Per-feature min-max scaling into `[0, 1]`; constant features become 0.
pub fn min_max_normalize(x: &mut Matrix) -> Normalization {
    let cols = x.cols();
    let mut min = vec![f64::INFINITY; cols];
    let mut max = vec![f64::NEG_INFINITY; cols];
    for row in x.row_iter() {
        for j in 0..cols {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
        }
    }
    for r in 0..x.rows() {
        let row = x.row_mut(r);
        for j in 0..cols {
            let span = max[j] - min[j];
            row[j] = if span > 0.0 {
                ((row[j] - min[j]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    Normalization::MinMax { min, max }
}

pub fn load_dense_csv(path: &Path, has_labels: bool) -> Result<Dataset> {
    let (mut x, labels) = read_dense_csv(path, has_labels)?;
    let norm = min_max_normalize(&mut x);
    let mut ds = Dataset::new(x, labels, path.display().to_string())?;
    ds.normalization = norm;
    Ok(ds)
}

/// Writes values with shortest round-trip formatting.
pub fn save_dense_csv(path: &Path, x: &Matrix, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != x.rows() {
            return Err(Error::Consistency("label count differs from rows".into()));
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (r, row) in x.row_iter().enumerate() {
        let mut line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        if let Some(l) = labels {
            line.push(',');
            line.push_str(&l[r].to_string());
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Sparse `row,col,value` lines (0-based) into a dense `rows × cols`
/// dataset; repeated coordinates are summed, then min-max normalized.
pub fn load_sparse_triplets(path: &Path, dims: (usize, usize)) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let (rows, cols) = dims;
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (line, content) in data_lines(&text) {
        let fields: Vec<&str> = content.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::format_at(
                line,
                format!("expected row,col,value; found {} fields", fields.len()),
            ));
        }
        let r = parse_label(fields[0], line)?;
        let c = parse_label(fields[1], line)?;
        if r >= rows || c >= cols {
            return Err(Error::format_at(
                line,
                format!("index ({r}, {c}) outside {rows}x{cols}"),
            ));
        }
        *acc.entry((r, c)).or_insert(0.0) += parse_f64(fields[2], line)?;
    }
    let mut x = Matrix::zeros(rows, cols);
    for ((r, c), v) in acc {
        x[(r, c)] = v;
    }
    let norm = min_max_normalize(&mut x);
    let mut ds = Dataset::new(x, None, path.display().to_string())?;
    ds.normalization = norm;
    Ok(ds)
}

/// One non-negative integer label per line.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    data_lines(&text).map(|(line, l)| parse_label(l, line)).collect()
}

pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let x = Matrix::from_rows(&[[0.1, 1e-300], [-3.5, 2.0 / 3.0], [7.0, f64::MIN_POSITIVE]])
            .unwrap();
        save_dense_csv(&p, &x, Some(&[0, 2, 1])).unwrap();
        let (back, labels) = read_dense_csv(&p, true).unwrap();
        assert_eq!(back, x);
        assert_eq!(labels, Some(vec![0, 2, 1]));
    }

    #[test]
    fn min_max_midpoint_and_constant_feature() {
        let mut x = Matrix::from_rows(&[[2.0, 5.0], [3.0, 5.0], [4.0, 5.0]]).unwrap();
        min_max_normalize(&mut x);
        assert_eq!(x.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(x.column(1), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn ragged_rows_report_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1,2,3\n4,5\n").unwrap();
        match read_dense_csv(&p, false) {
            Err(Error::Format { line: Some(2), .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn triplets_sum_duplicates_and_check_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "0,0,1\n0,0,2\n1,1,1\n2,0,0\n").unwrap();
        let ds = load_sparse_triplets(&p, (3, 2)).unwrap();
        // column 0 raw: [3, 0, 0]
        assert_eq!(ds.x.column(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(ds.x.column(1), vec![0.0, 1.0, 0.0]);

        fs::write(&p, "0,0,1\n5,0,1\n").unwrap();
        match load_sparse_triplets(&p, (3, 2)) {
            Err(Error::Format { line: Some(2), .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.txt");
        save_labels(&p, &[3, 0, 9]).unwrap();
        assert_eq!(load_labels(&p).unwrap(), vec![3, 0, 9]);
    }
}
