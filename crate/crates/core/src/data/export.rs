//! Comma-separated per-point export: index, hard label, cluster
//! probabilities and embedding coordinates.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Assignments {
    pub labels: Vec<usize>,
    /// `n × k`
    pub probabilities: Matrix,
    /// `n × embedding_dim`
    pub embedding: Matrix,
}

pub fn save_assignments(path: &Path, labels: &[usize], p: &Matrix, h: &Matrix) -> Result<()> {
    if p.rows() != labels.len() || h.rows() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} labels, {} probability rows, {} embedding rows",
            labels.len(),
            p.rows(),
            h.rows()
        )));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    let mut header = vec!["index".to_string(), "label".to_string()];
    header.extend((0..p.cols()).map(|i| format!("p{i}")));
    header.extend((0..h.cols()).map(|i| format!("h{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (t, &label) in labels.iter().enumerate() {
        let mut fields = vec![t.to_string(), label.to_string()];
        fields.extend(p.row(t).iter().map(f64::to_string));
        fields.extend(h.row(t).iter().map(f64::to_string));
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_assignments(path: &Path) -> Result<Assignments> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::format("empty assignments file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let k = columns.iter().filter(|c| c.starts_with('p')).count();
    let e = columns.iter().filter(|c| c.starts_with('h')).count();
    if columns.len() != 2 + k + e || columns.first() != Some(&"index") {
        return Err(Error::format_at(1, "unexpected header"));
    }
    let mut labels = Vec::new();
    let mut pd = Vec::new();
    let mut hd = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != columns.len() {
            return Err(Error::format_at(i + 1, "wrong field count"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::format_at(i + 1, format!("bad number {s:?}")))
        };
        labels.push(
            f[1].parse()
                .map_err(|_| Error::format_at(i + 1, "bad label"))?,
        );
        for s in &f[2..2 + k] {
            pd.push(num(s)?);
        }
        for s in &f[2 + k..] {
            hd.push(num(s)?);
        }
    }
    let n = labels.len();
    Ok(Assignments {
        labels,
        probabilities: Matrix::new(n, k, pd)?,
        embedding: Matrix::new(n, e, hd)?,
    })
}
