//! Round orchestration: client sampling, local training with mask
//! readjustment, aggregation and server-side pruning for every supported
//! algorithm.

mod aggregate;
mod client;
mod config;
mod server;

pub use aggregate::{aggregate_dense, aggregate_sparse, prunefl_select_mask, server_finalize};
pub use client::{client_update, ClientUpdate};
pub use config::{Algorithm, AlgorithmConfig, TrainingConfig};
pub use server::{evaluate, evaluate_clients, prunable_shapes, sample_clients, Evaluation, RoundOutcome, Server};
