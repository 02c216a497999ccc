//! External clustering quality measures: NMI, ARI and Hungarian-matched
//! accuracy, all computed from a contingency table.

mod hungarian;

use std::fmt;

pub use hungarian::hungarian_min;

use crate::error::{Error, Result};

/// `counts[a][b]` = number of points with true class `a` and predicted cluster `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub n: usize,
}

impl ContingencyTable {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn clusters(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut out = vec![0; self.clusters()];
        for row in &self.counts {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }
}

fn check_lengths(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Input(format!(
            "label length mismatch: {} true vs {} predicted",
            truth.len(),
            pred.len()
        )));
    }
    Ok(())
}

pub fn contingency(truth: &[usize], pred: &[usize]) -> Result<ContingencyTable> {
    check_lengths(truth, pred)?;
    let classes = truth.iter().max().map_or(0, |m| m + 1);
    let clusters = pred.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; clusters]; classes];
    for (&a, &b) in truth.iter().zip(pred) {
        counts[a][b] += 1;
    }
    Ok(ContingencyTable {
        counts,
        n: truth.len(),
    })
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.n as f64;
    let rows = table.row_sums();
    let cols = table.column_sums();
    let mut mi = 0.0;
    for (a, row) in table.counts.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            mi += c / n * (c * n / (rows[a] as f64 * cols[b] as f64)).ln();
        }
    }
    mi.max(0.0)
}

/// Normalizer applied to the mutual information.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NmiNormalization {
    /// `√(H(U)·H(V))`
    #[default]
    Geometric,
    /// `(H(U) + H(V)) / 2`
    Arithmetic,
}

pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    nmi_with(truth, pred, NmiNormalization::Geometric)
}

/// Normalized mutual information with natural logarithms. Two single-cluster
/// partitions score 1; a single-cluster partition against any other scores 0.
pub fn nmi_with(truth: &[usize], pred: &[usize], norm: NmiNormalization) -> Result<f64> {
    let table = contingency(truth, pred)?;
    if table.n == 0 {
        return Ok(1.0);
    }
    let hu = entropy(&table.row_sums(), table.n);
    let hv = entropy(&table.column_sums(), table.n);
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    if is_relabelling(&table) {
        return Ok(1.0);
    }
    let denom = match norm {
        NmiNormalization::Geometric => (hu * hv).sqrt(),
        NmiNormalization::Arithmetic => 0.5 * (hu + hv),
    };
    Ok((mutual_information(&table) / denom).clamp(0.0, 1.0))
}

/// Every class maps onto exactly one cluster and vice versa.
fn is_relabelling(table: &ContingencyTable) -> bool {
    let nonzero = |cells: &mut dyn Iterator<Item = usize>| cells.filter(|&c| c > 0).count() <= 1;
    table.counts.iter().all(|r| nonzero(&mut r.iter().copied()))
        && (0..table.clusters()).all(|j| nonzero(&mut table.counts.iter().map(|r| r[j])))
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from pair counts.
pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let table = contingency(truth, pred)?;
    let index: f64 = table.counts.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = table.row_sums().iter().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = table.column_sums().iter().map(|&c| comb2(c)).sum();
    let total = comb2(table.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        // both partitions are all-singletons or both are one cluster
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Best one-to-one cluster → class mapping accuracy via the Hungarian method
/// on the (negated) contingency table padded to square.
pub fn acc(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let table = contingency(truth, pred)?;
    if table.n == 0 {
        return Ok(1.0);
    }
    let size = table.classes().max(table.clusters());
    let mut cost = vec![vec![0.0; size]; size];
    for (b, row) in cost.iter_mut().enumerate().take(table.clusters()) {
        for (a, cell) in row.iter_mut().enumerate().take(table.classes()) {
            *cell = -(table.counts[a][b] as f64);
        }
    }
    let assignment = hungarian_min(&cost);
    let matched: usize = assignment
        .iter()
        .enumerate()
        .filter(|&(b, &a)| b < table.clusters() && a < table.classes())
        .map(|(b, &a)| table.counts[a][b])
        .sum();
    Ok(matched as f64 / table.n as f64)
}

/// NMI, ARI and ACC for one labelling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
}

impl Scores {
    pub fn compute(truth: &[usize], pred: &[usize]) -> Result<Self> {
        Ok(Self {
            nmi: nmi(truth, pred)?,
            ari: ari(truth, pred)?,
            acc: acc(truth, pred)?,
        })
    }
}

/// Ordered metric name → value record, rendered as `name = value` lines with
/// six decimals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    entries: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push((name.into(), value));
    }

    pub fn push_scores(&mut self, prefix: &str, scores: &Scores) {
        self.push(format!("{prefix}nmi"), scores.nmi);
        self.push(format!("{prefix}ari"), scores.ari);
        self.push(format!("{prefix}acc"), scores.acc);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == name).map(|e| e.1)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format_at(i + 1, "expected `name = value`"))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::format_at(i + 1, format!("bad number {v:?}")))?;
            out.push(k.trim(), v);
        }
        Ok(out)
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v:.6}")?;
        }
        Ok(())
    }
}
