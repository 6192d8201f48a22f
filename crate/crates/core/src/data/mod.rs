//! Datasets, file-format loaders and client partitioning.

mod cifar;
mod dataset;
mod idx;
mod partition;
mod synthetic;

pub use cifar::{encode_cifar10_bin, load_cifar10_bin, parse_cifar10_bin, CIFAR_RECORD};
pub use dataset::{ClientShard, LabeledDataset};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels, write_idx};
pub use partition::{partition, partition_dirichlet, partition_pathological, split_holdout, PartitionSpec};
pub use synthetic::{decode_synthetic, encode_synthetic, load_synthetic, synthetic_blobs, write_synthetic};
