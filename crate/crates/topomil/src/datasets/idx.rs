//! IDX (MNIST-style) binary ingestion.
//!
//! Big-endian format: images carry magic 0x00000803 followed by count,
//! rows, cols and unsigned-byte pixels; labels carry magic 0x00000801
//! followed by count and one byte per label. Pixels are scaled to [0, 1]
//! and flattened row-major.

use std::path::Path;

use crate::tensor::Tensor;

use super::{DataError, InstancePool, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::Truncated {
                file: self.file.clone(),
                needed: self.pos + n,
                had: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn read_u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Loads an image/label file pair into a labeled instance pool.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<InstancePool> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;

    let mut images = Reader {
        bytes: &image_bytes,
        pos: 0,
        file: images_path.display().to_string(),
    };
    let magic = images.read_u32()?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::WrongMagic {
            file: images.file,
            expected: IMAGES_MAGIC,
            got: magic,
        });
    }
    let count = images.read_u32()? as usize;
    let rows = images.read_u32()? as usize;
    let cols = images.read_u32()? as usize;
    let pixels = images.take(count * rows * cols)?;

    let mut labels = Reader {
        bytes: &label_bytes,
        pos: 0,
        file: labels_path.display().to_string(),
    };
    let magic = labels.read_u32()?;
    if magic != LABELS_MAGIC {
        return Err(DataError::WrongMagic {
            file: labels.file,
            expected: LABELS_MAGIC,
            got: magic,
        });
    }
    let label_count = labels.read_u32()? as usize;
    if label_count != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let label_data = labels.take(count)?;

    let dim = rows * cols;
    let features: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(InstancePool {
        features: Tensor::matrix(count, dim, features),
        labels: label_data.iter().map(|&l| l as usize).collect(),
    })
}

/// Writes an IDX image/label pair (used by tests and fixtures).
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    images: &[Vec<u8>],
    labels: &[u8],
    rows: usize,
    cols: usize,
) -> Result<()> {
    assert_eq!(images.len(), labels.len());
    let mut image_bytes = Vec::new();
    image_bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        assert_eq!(img.len(), rows * cols);
        image_bytes.extend_from_slice(img);
    }
    let mut label_bytes = Vec::new();
    label_bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    label_bytes.extend_from_slice(labels);
    std::fs::write(images_path, image_bytes)?;
    std::fs::write(labels_path, label_bytes)?;
    Ok(())
}
