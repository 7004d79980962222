//! MNIST-style IDX files: big-endian magic, big-endian dimensions, then raw `u8` items.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use super::{DataError, Dataset, Result};
use crate::matrix::Matrix;

/// Unsigned-byte data, three dimensions (count × rows × cols).
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
/// Unsigned-byte data, one dimension (count).
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]`; raw bytes are kept as payloads.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;
    parse_idx(
        &images,
        &labels,
        &images_path.display().to_string(),
        &labels_path.display().to_string(),
    )
}

fn header(cur: &mut Cursor<&[u8]>, file: &str, what: &str) -> Result<u32> {
    cur.read_u32::<BigEndian>()
        .map_err(|_| DataError::TruncatedFile {
            file: file.to_string(),
            detail: format!("header ends before {what}"),
        })
}

/// Parses in-memory IDX bytes; `images_name` and `labels_name` are used in error messages.
pub fn parse_idx(
    images: &[u8],
    labels: &[u8],
    images_name: &str,
    labels_name: &str,
) -> Result<Dataset> {
    let mut img = Cursor::new(images);
    let magic = header(&mut img, images_name, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            file: images_name.to_string(),
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let mut lab = Cursor::new(labels);
    let magic = header(&mut lab, labels_name, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            file: labels_name.to_string(),
            found: magic,
            expected: LABEL_MAGIC,
        });
    }

    let n = header(&mut img, images_name, "item count")? as usize;
    let rows = header(&mut img, images_name, "row count")? as usize;
    let cols = header(&mut img, images_name, "column count")? as usize;
    let n_labels = header(&mut lab, labels_name, "item count")? as usize;
    if n != n_labels {
        return Err(DataError::CountMismatch {
            file: labels_name.to_string(),
            found: n_labels,
            other_file: images_name.to_string(),
            expected: n,
        });
    }
    let pixels = rows * cols;
    if pixels == 0 {
        return Err(DataError::InvalidDataset(format!(
            "{images_name}: zero-sized images"
        )));
    }

    let body = &images[16..];
    if body.len() < n * pixels {
        return Err(DataError::TruncatedFile {
            file: images_name.to_string(),
            detail: format!("expected {} pixel bytes, found {}", n * pixels, body.len()),
        });
    }
    let mut label_bytes = vec![0u8; n];
    lab.read_exact(&mut label_bytes)
        .map_err(|_| DataError::TruncatedFile {
            file: labels_name.to_string(),
            detail: format!(
                "expected {n} label bytes, found {}",
                labels.len().saturating_sub(8)
            ),
        })?;

    let mut features = Vec::with_capacity(n * pixels);
    let mut payloads = Vec::with_capacity(n);
    for chunk in body[..n * pixels].chunks_exact(pixels) {
        features.extend(chunk.iter().map(|&b| f64::from(b) / 255.0));
        payloads.push(chunk.to_vec());
    }
    let class_count = label_bytes
        .iter()
        .copied()
        .max()
        .map_or(2, |m| (m as usize + 1).max(2));
    let labels = label_bytes.iter().map(|&l| Some(l as usize)).collect();
    Dataset::new(Matrix::from_vec(n, pixels, features), labels, class_count)?
        .with_payloads(payloads, Some((rows, cols)))
}

/// Encodes images (each `rows * cols` bytes) and labels as an IDX pair `(images, labels)`.
pub fn encode_idx(
    images: &[Vec<u8>],
    rows: usize,
    cols: usize,
    labels: &[u8],
) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + images.len() * rows * cols);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for im in images {
        img.extend_from_slice(im);
    }
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}
