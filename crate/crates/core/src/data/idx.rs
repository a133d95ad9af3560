//! IDX container reader (MNIST-style): big-endian `u32` magic, big-endian
//! `u32` dimensions, then an unsigned-byte payload.

use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};

const LABELS_MAGIC: u32 = 0x0000_0801;
const IMAGES_MAGIC: u32 = 0x0000_0803;

struct Reader<'p, 'a> {
    path: &'p Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'_, 'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(|| self.truncated(usize::MAX))?;
        if end > self.bytes.len() {
            return Err(self.truncated(end));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn truncated(&self, needed: usize) -> Error {
        Error::Truncated {
            path: self.path.to_path_buf(),
            needed,
            actual: self.bytes.len(),
        }
    }
}

/// Parses an IDX payload already in memory.
///
/// Returns `(dims, payload)` after checking the magic number.
pub fn parse_idx<'a>(path: &Path, bytes: &'a [u8], expected_magic: u32) -> Result<(Vec<usize>, &'a [u8])> {
    let mut r = Reader {
        path,
        bytes,
        pos: 0,
    };
    let magic = r.u32()?;
    if magic != expected_magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: expected_magic,
            found: magic,
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::invalid(format!("{}: idx dimensions overflow", path.display())))?;
    let payload = r.take(len)?;
    Ok((dims, payload))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::from)
}

/// Loads an image/label IDX pair. Pixels are scaled from bytes to `[0, 1]`;
/// the class count is one more than the largest label.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path: PathBuf = images_path.as_ref().into();
    let labels_path: PathBuf = labels_path.as_ref().into();
    let image_bytes = read(&images_path)?;
    let label_bytes = read(&labels_path)?;

    let (img_dims, pixels) = parse_idx(&images_path, &image_bytes, IMAGES_MAGIC)?;
    let (lbl_dims, raw_labels) = parse_idx(&labels_path, &label_bytes, LABELS_MAGIC)?;

    let n_images = img_dims[0];
    let n_labels = lbl_dims[0];
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let n_features = img_dims[1] * img_dims[2];
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| usize::from(l)).collect();
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1).max(2);
    Dataset::new(features, labels, n_features, n_classes)
}

/// Serializes `n` row-major `rows x cols` byte images as an IDX file.
pub fn encode_idx_images(pixels: &[u8], n: usize, rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), n * rows * cols, "pixel count");
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [n, rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
