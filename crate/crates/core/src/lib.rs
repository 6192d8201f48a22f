//! Federated dynamic sparse training simulator.
//!
//! A single-process, deterministic simulation of federated learning where
//! clients train sparse sub-networks, readjust their masks locally by
//! magnitude pruning and gradient-magnitude regrowth, and the server merges
//! the sparse updates with a mask-aware weighted average. Every transfer is
//! metered bit-exactly so bandwidth claims can be checked against closed-form
//! cost formulas.
//!
//! Module map:
//! - [`nn`]: dense CNN/MLP engine with backprop and momentum SGD.
//! - [`sparsity`]: masks, ERK allocation, prune/grow, readjustment schedule.
//! - [`protocol`]: client sampling, local training, aggregation, rounds.
//! - [`data`]: MNIST/CIFAR-10 loaders, synthetic blobs, non-iid partitioners.
//! - [`ledger`]: communication metering, bfloat16, FLOP counts, cost formulas.
//! - [`experiment`]: experiment configuration, metrics files, best-at-cap.

pub mod data;
pub mod error;
pub mod experiment;
pub mod ledger;
pub mod nn;
pub mod protocol;
pub mod rng;
pub mod sparsity;

pub use error::{Error, Result};
