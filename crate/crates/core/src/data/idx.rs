//! IDX files as used by MNIST: big-endian `u32` magic, one big-endian `u32`
//! per dimension, then raw `u8` payload.

use std::fs;
use std::path::Path;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_CLASSES: usize = 10;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(bytes.len() as u64, "truncated IDX header"))
}

/// Validates the header and returns `(dims, payload offset)`.
fn parse_header(bytes: &[u8], magic: u32) -> Result<(Vec<usize>, usize)> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::format(
            0,
            format!("bad IDX magic {found:#010x}, expected {magic:#010x}"),
        ));
    }
    let ndim = (magic & 0xFF) as usize;
    let dims = (0..ndim)
        .map(|d| read_u32(bytes, 4 + 4 * d).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let need: usize = dims.iter().product();
    if bytes.len() - start < need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated IDX payload: {need} bytes declared, {} present", bytes.len() - start),
        ));
    }
    Ok((dims, start))
}

/// Parses an IDX image file into `[count, 1, H, W]` pixels scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor<f32>> {
    let (dims, start) = parse_header(bytes, IMAGES_MAGIC)?;
    let len: usize = dims.iter().product();
    let data = bytes[start..start + len].iter().map(|&b| f32::from(b) / 255.0).collect();
    Tensor::new(vec![dims[0], 1, dims[1], dims[2]], data)
}

/// Parses an IDX label file; labels must be digits `0..10`.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let (dims, start) = parse_header(bytes, LABELS_MAGIC)?;
    bytes[start..start + dims[0]]
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if usize::from(b) < IDX_CLASSES {
                Ok(usize::from(b))
            } else {
                Err(Error::format((start + i) as u64, format!("label {b} is not a digit")))
            }
        })
        .collect()
}

/// Loads an IDX image/label file pair.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::format(
            4,
            format!("{} images but {} labels", images.shape()[0], labels.len()),
        ));
    }
    LabeledDataset::new(images, labels, IDX_CLASSES)
}

fn to_byte(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Serializes single-channel images in IDX form.
pub fn encode_idx_images(images: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = images.shape();
    if s.len() != 4 || s[1] != 1 {
        return Err(Error::shape(format!("IDX images must be [count, 1, H, W], got {s:?}")));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for &d in &[s[0], s[2], s[3]] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend(images.data().iter().map(|&v| to_byte(v)));
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|&l| l as u8));
    out
}

/// Writes `ds` as an IDX image/label file pair.
pub fn write_idx(ds: &LabeledDataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    fs::write(images_path, encode_idx_images(ds.images())?)?;
    fs::write(labels_path, encode_idx_labels(ds.labels()))?;
    Ok(())
}
