//! Reader and writer for the big-endian IDX files MNIST ships in.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Images as columns of pixel intensities in `[0, 1]`, with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxDataset {
    /// `(rows * cols) x count`, row-major pixels per column.
    pub images: DenseMatrix,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl IdxDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn be_u32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Validates magic and length; returns the dimension fields.
fn parse_header(bytes: &[u8], path: &Path, magic: u32, ndims: usize) -> Result<Vec<usize>> {
    let header = 4 + 4 * ndims;
    let short = |expected: usize| Error::Length {
        file: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(short(header));
    }
    let observed = be_u32(bytes, 0);
    if observed != magic {
        return Err(Error::Format {
            file: path.to_path_buf(),
            observed,
        });
    }
    if bytes.len() < header {
        return Err(short(header));
    }
    let dims: Vec<usize> = (0..ndims).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(short(expected));
    }
    Ok(dims)
}

/// Loads an image file and its label file.
pub fn load_idx(images: &Path, labels: &Path) -> Result<IdxDataset> {
    load(images, labels, usize::MAX)
}

/// Like [`load_idx`] but converts only the first `n` images.
pub(crate) fn load_idx_first(images: &Path, labels: &Path, n: usize) -> Result<IdxDataset> {
    load(images, labels, n)
}

fn load(images: &Path, labels: &Path, limit: usize) -> Result<IdxDataset> {
    let ib = read(images)?;
    let lb = read(labels)?;
    let idims = parse_header(&ib, images, IMAGE_MAGIC, 3)?;
    let ldims = parse_header(&lb, labels, LABEL_MAGIC, 1)?;
    let (count, rows, cols) = (idims[0], idims[1], idims[2]);
    if ldims[0] != count {
        return Err(Error::Consistency(format!(
            "{} holds {count} images but {} holds {} labels",
            images.display(),
            labels.display(),
            ldims[0]
        )));
    }
    let n = count.min(limit);
    let px = rows * cols;
    let pixels = &ib[16..];
    let image_matrix = DenseMatrix::from_fn(px, n, |r, c| pixels[c * px + r] as f64 / 255.0);
    Ok(IdxDataset {
        images: image_matrix,
        labels: lb[8..8 + n].to_vec(),
        rows,
        cols,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes `pixels` (image-major, `rows * cols` bytes per image) as an IDX image file.
pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let px = rows * cols;
    if px == 0 || pixels.len() % px != 0 {
        return Err(Error::InvalidInput(format!("{} bytes do not split into {rows}x{cols} images", pixels.len())));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, (pixels.len() / px) as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    write(path, &out)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    write(path, &out)
}
