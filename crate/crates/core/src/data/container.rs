//! Self-describing little-endian binary containers shared by dataset and
//! model persistence.

use std::fs;
use std::path::Path;

use super::{Dataset, Normalization};
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const DATASET_MAGIC: &[u8; 8] = b"DAMICDS\0";
pub const DATASET_VERSION: u32 = 1;

#[derive(Default)]
pub struct BinWriter {
    buf: Vec<u8>,
}

impl BinWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed block of floats.
    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }

    pub fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        for &x in m.as_slice() {
            self.f64(x);
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct BinReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BinReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::format(format!("truncated container at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        if self.take(magic.len())? != magic {
            return Err(Error::format("unrecognized container magic"));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::format("length overflows usize"))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bounded_len(&mut self, elem: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(Error::format("block length exceeds container size"));
        }
        Ok(n)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.bounded_len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.bounded_len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("invalid utf-8"))
    }

    pub fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l.saturating_mul(8) <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::format("matrix block exceeds container size"))?;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Matrix::new(rows, cols, data)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(format!(
                "{} trailing bytes in container",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = BinWriter::new();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.str(&ds.name);
    w.matrix(&ds.x);
    match &ds.labels {
        Some(l) => {
            w.u8(1);
            w.u64(l.len() as u64);
            l.iter().for_each(|&v| w.u64(v as u64));
        }
        None => w.u8(0),
    }
    match &ds.normalization {
        Normalization::None => w.u8(0),
        Normalization::Scale(s) => {
            w.u8(1);
            w.f64(*s);
        }
        Normalization::MinMax { min, max } => {
            w.u8(2);
            w.f64s(min);
            w.f64s(max);
        }
    }
    fs::write(path, w.finish())?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let mut r = BinReader::new(&bytes);
    r.expect_magic(DATASET_MAGIC)?;
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::format(format!("unsupported dataset version {version}")));
    }
    let name = r.str()?;
    let x = r.matrix()?;
    let labels = match r.u8()? {
        0 => None,
        1 => {
            let n = r.bounded_len(8)?;
            Some((0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?)
        }
        t => return Err(Error::format(format!("bad label flag {t}"))),
    };
    let normalization = match r.u8()? {
        0 => Normalization::None,
        1 => Normalization::Scale(r.f64()?),
        2 => Normalization::MinMax {
            min: r.f64s()?,
            max: r.f64s()?,
        },
        t => return Err(Error::format(format!("bad normalization tag {t}"))),
    };
    r.finish()?;
    let mut ds = Dataset::new(x, labels, name)?;
    ds.normalization = normalization;
    Ok(ds)
}
