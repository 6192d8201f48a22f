//! Gaussian-blob images for fast, deterministic tests.
//!
//! On-disk format (all integers little-endian):
//!
//! | bytes | field                               |
//! |-------|-------------------------------------|
//! | 4     | magic `FDSB`                        |
//! | 4     | format version, `u32` = 1           |
//! | 8     | sample count `u64`                  |
//! | 12    | sample shape C, H, W as `u32`       |
//! | 4     | number of classes `u32`             |
//! | count | labels, one `u8` each               |
//! | 4·len | pixels as `f32`, sample-major       |

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::{stream_rng, Stream};

const MAGIC: &[u8; 4] = b"FDSB";
const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 8 + 12 + 4;
const NOISE: f64 = 0.15;

/// `per_class` samples of each of `num_classes` classes with shape `dims`.
///
/// Class `k` has mean `0.5 + separation/4 · p_k`, where `p_k` is a seeded
/// ±1 pattern; each pixel gets N(0, 0.15²) noise and is clamped to `[0, 1]`.
/// Samples are ordered class by class.
pub fn synthetic_blobs(
    num_classes: usize,
    per_class: usize,
    dims: [usize; 3],
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes == 0 || per_class == 0 || dims.contains(&0) {
        return Err(Error::config("synthetic_blobs needs positive sizes"));
    }
    if num_classes > 256 {
        return Err(Error::config("synthetic_blobs supports at most 256 classes"));
    }
    let d: usize = dims.iter().product();
    let mut rng = stream_rng(seed, Stream::Data, 0, 0);
    let patterns: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();
    let noise = Normal::new(0.0, NOISE).expect("valid normal");
    let mut pixels = Vec::with_capacity(num_classes * per_class * d);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (k, p) in patterns.iter().enumerate() {
        for _ in 0..per_class {
            pixels.extend(
                p.iter()
                    .map(|&s| (0.5 + 0.25 * separation * s + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32),
            );
            labels.push(k);
        }
    }
    let images = Tensor::new(vec![labels.len(), dims[0], dims[1], dims[2]], pixels)?;
    LabeledDataset::new(images, labels, num_classes)
}

pub fn encode_synthetic(ds: &LabeledDataset) -> Result<Vec<u8>> {
    if ds.num_classes() > 256 {
        return Err(Error::config("format stores labels as u8"));
    }
    let mut out = Vec::with_capacity(HEADER + ds.len() + 4 * ds.images().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for &s in ds.sample_shape() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&(ds.num_classes() as u32).to_le_bytes());
    out.extend(ds.labels().iter().map(|&l| l as u8));
    for &v in ds.images().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_synthetic(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.len() < HEADER {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    if u32_at(4) != VERSION as usize {
        return Err(Error::format(4, format!("unsupported version {}", u32_at(4))));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let dims = [u32_at(16), u32_at(20), u32_at(24)];
    let num_classes = u32_at(28);
    let len = count * dims.iter().product::<usize>();
    let need = HEADER + count + 4 * len;
    if bytes.len() != need {
        return Err(Error::format(
            bytes.len().min(need) as u64,
            format!("expected {need} bytes, found {}", bytes.len()),
        ));
    }
    let labels = bytes[HEADER..HEADER + count].iter().map(|&b| usize::from(b)).collect();
    let pixels = bytes[HEADER + count..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let images = Tensor::new(vec![count, dims[0], dims[1], dims[2]], pixels)?;
    LabeledDataset::new(images, labels, num_classes)
}

pub fn write_synthetic(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_synthetic(ds)?)?;
    Ok(())
}

pub fn load_synthetic(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    decode_synthetic(&fs::read(path)?)
}
