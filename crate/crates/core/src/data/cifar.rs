//! CIFAR-10 binary batches: records of one label byte followed by 3072
//! pixel bytes (R, G and B planes of 32×32, row-major).

use std::fs;
use std::path::Path;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
const CIFAR_CLASSES: usize = 10;

/// Appends the records in `bytes` to `pixels` / `labels`.
fn parse_into(bytes: &[u8], pixels: &mut Vec<f32>, labels: &mut Vec<usize>) -> Result<()> {
    if bytes.len() % CIFAR_RECORD != 0 {
        let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
        return Err(Error::format(
            whole as u64,
            format!("{} bytes is not a multiple of the {CIFAR_RECORD}-byte record", bytes.len()),
        ));
    }
    for (r, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if usize::from(rec[0]) >= CIFAR_CLASSES {
            return Err(Error::format(
                (r * CIFAR_RECORD) as u64,
                format!("label {} out of range", rec[0]),
            ));
        }
        labels.push(usize::from(rec[0]));
        pixels.extend(rec[1..].iter().map(|&b| f32::from(b) / 255.0));
    }
    Ok(())
}

/// Parses one in-memory batch file.
pub fn parse_cifar10_bin(bytes: &[u8]) -> Result<LabeledDataset> {
    let (mut pixels, mut labels) = (Vec::new(), Vec::new());
    parse_into(bytes, &mut pixels, &mut labels)?;
    let images = Tensor::new(vec![labels.len(), 3, 32, 32], pixels)?;
    LabeledDataset::new(images, labels, CIFAR_CLASSES)
}

/// Loads and concatenates batch files in the given order.
pub fn load_cifar10_bin<P: AsRef<Path>>(batch_paths: &[P]) -> Result<LabeledDataset> {
    let (mut pixels, mut labels) = (Vec::new(), Vec::new());
    for path in batch_paths {
        parse_into(&fs::read(path)?, &mut pixels, &mut labels)?;
    }
    let images = Tensor::new(vec![labels.len(), 3, 32, 32], pixels)?;
    LabeledDataset::new(images, labels, CIFAR_CLASSES)
}

/// Serializes a `[count, 3, 32, 32]` dataset as one batch file.
pub fn encode_cifar10_bin(ds: &LabeledDataset) -> Result<Vec<u8>> {
    if ds.sample_shape() != [3, 32, 32] {
        return Err(Error::shape(format!(
            "CIFAR-10 records are 3x32x32, got {:?}",
            ds.sample_shape()
        )));
    }
    let mut out = Vec::with_capacity(ds.len() * CIFAR_RECORD);
    for i in 0..ds.len() {
        out.push(ds.labels()[i] as u8);
        out.extend(ds.image(i).iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_record_is_black_class_zero() {
        let ds = parse_cifar10_bin(&vec![0u8; CIFAR_RECORD]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.labels(), &[0]);
        assert!(ds.image(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip_and_errors() {
        let mut bytes: Vec<u8> = (0..3 * CIFAR_RECORD).map(|i| (i * 7 % 256) as u8).collect();
        for r in 0..3 {
            bytes[r * CIFAR_RECORD] = r as u8 + 4;
        }
        let ds = parse_cifar10_bin(&bytes).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(encode_cifar10_bin(&ds).unwrap(), bytes);
        assert!(matches!(
            parse_cifar10_bin(&bytes[..CIFAR_RECORD + 5]),
            Err(Error::Format { offset: 3073, .. })
        ));
        bytes[2 * CIFAR_RECORD] = 10;
        assert!(matches!(parse_cifar10_bin(&bytes), Err(Error::Format { offset: 6146, .. })));
    }
}
