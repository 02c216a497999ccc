//! IDX binary files (MNIST / Fashion-MNIST layout): big-endian magic and
//! dimensions followed by unsigned bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Dataset, Normalization};
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(format!("{what}: truncated header")))
}

fn parse_images(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "images: bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * dim {
        return Err(Error::format(format!(
            "images: expected {} pixel bytes, found {}",
            n * dim,
            body.len()
        )));
    }
    Ok((n, dim, body))
}

fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "labels: bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::format(format!(
            "labels: expected {n} label bytes, found {}",
            body.len()
        )));
    }
    Ok(body)
}

/// Loads an image/label IDX pair, flattening images row-major and scaling
/// pixels by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;
    let (n, dim, pixels) = parse_images(&img_bytes)?;
    let labels = parse_labels(&lbl_bytes)?;
    if labels.len() != n {
        return Err(Error::Consistency(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    let x = Matrix::new(n, dim, pixels.iter().map(|&p| p as f64 / 255.0).collect())?;
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    let mut ds = Dataset::new(x, Some(labels.iter().map(|&l| l as usize).collect()), name)?;
    ds.normalization = Normalization::Scale(255.0);
    Ok(ds)
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let dim = rows * cols;
    if dim == 0 || !pixels.len().is_multiple_of(dim) {
        return Err(Error::Input("pixel buffer is not a whole number of images".into()));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    f.write_all(&((pixels.len() / dim) as u32).to_be_bytes())?;
    f.write_all(&(rows as u32).to_be_bytes())?;
    f.write_all(&(cols as u32).to_be_bytes())?;
    f.write_all(pixels)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let img = dir.join("img");
        let lbl = dir.join("lbl");
        let mut pixels = vec![0u8; 2 * 784];
        pixels[0] = 255;
        pixels[784 + 10] = 51;
        write_idx_images(&img, 28, 28, &pixels).unwrap();
        write_idx_labels(&lbl, &[3, 7]).unwrap();
        (img, lbl)
    }

    #[test]
    fn parses_two_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = fixture(dir.path());
        let ds = load_idx(&img, &lbl).unwrap();
        assert_eq!(ds.x.shape(), (2, 784));
        assert_eq!(ds.x[(0, 0)], 1.0);
        assert_eq!(ds.x[(1, 10)], 0.2);
        assert!(ds.x.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(ds.labels, Some(vec![3, 7]));
    }

    #[test]
    fn truncated_and_bad_magic_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = fixture(dir.path());
        let mut bytes = fs::read(&img).unwrap();
        bytes.truncate(bytes.len() - 5);
        fs::write(&img, &bytes).unwrap();
        assert!(matches!(load_idx(&img, &lbl), Err(Error::Format { .. })));

        let (img, lbl) = fixture(dir.path());
        assert!(matches!(load_idx(&lbl, &img), Err(Error::Format { .. })));
    }

    #[test]
    fn count_mismatch_is_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = fixture(dir.path());
        write_idx_labels(&lbl, &[1, 2, 3]).unwrap();
        assert!(matches!(load_idx(&img, &lbl), Err(Error::Consistency(_))));
    }
}
