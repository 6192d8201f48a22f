use log::warn;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::data::{ClientShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::ledger::{meter_dense_transfer, meter_sparse_transfer, CommLedger, Quantizer, TransferRecord};
use crate::nn::Network;
use crate::protocol::aggregate::aggregate_gradients;
use crate::protocol::client::is_prunefl_round;
use crate::protocol::{aggregate_dense, aggregate_sparse, client_update, prunefl_select_mask, server_finalize};
use crate::protocol::{Algorithm, AlgorithmConfig};
use crate::rng::{stream_rng, Stream};
use crate::sparsity::{erk_distribution, Mask, SparseModel, SparsityDistribution};

/// `k` distinct client ids drawn uniformly from `0..n`, in ascending order.
pub fn sample_clients<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::contract(format!("cannot sample {k} of {n} clients")));
    }
    let mut ids = index::sample(rng, n, k).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Summary of one completed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    pub alpha_r: f64,
    pub sampled: Vec<usize>,
    pub failed_clients: usize,
    /// Server mask positions that changed this round.
    pub mask_flips: usize,
    /// Largest mask Hamming distance produced by a single client readjust.
    pub max_client_flips: usize,
    pub mean_train_loss: f64,
}

/// Global server state between rounds.
#[derive(Debug, Clone)]
pub struct Server {
    pub model: SparseModel,
    /// Next round to run (1-based).
    pub round: usize,
    /// Target layer-wise distribution 𝕊.
    pub base: SparsityDistribution,
    pub seed: u64,
    pub ledger: CommLedger,
    cfg: AlgorithmConfig,
    /// Mask most recently sent to clients.
    broadcast_mask: Option<Mask>,
}

/// Shapes of `net`'s prunable weight tensors.
pub fn prunable_shapes(net: &Network<f32>) -> Vec<Vec<usize>> {
    net.prunable_params()
        .into_iter()
        .map(|p| net.params()[p].shape().to_vec())
        .collect()
}

impl Server {
    /// Sets up round 1 from an initialized network. Sparse algorithms draw a
    /// uniformly random mask with ERK layer counts.
    pub fn new(cfg: AlgorithmConfig, net: Network<f32>, seed: u64) -> Result<Self> {
        let shapes = prunable_shapes(&net);
        let base = erk_distribution(&shapes, cfg.algorithm.sparsity())?;
        let model = if cfg.algorithm.is_sparse() {
            let mut rng = stream_rng(seed, Stream::InitialMask, 0, 0);
            let mask = Mask::random(base.sizes(), base.retained(), &mut rng);
            SparseModel::new(net, mask)?
        } else {
            SparseModel::dense(net)
        };
        Ok(Self {
            model,
            round: 1,
            base,
            seed,
            ledger: CommLedger::new(),
            cfg,
            broadcast_mask: None,
        })
    }

    pub fn config(&self) -> &AlgorithmConfig {
        &self.cfg
    }

    /// Readjustment ratio α_r for `round` (0 for algorithms without one).
    pub fn alpha_at(&self, round: usize) -> f64 {
        self.cfg.algorithm.schedule().map_or(0.0, |s| s.alpha_at(round))
    }

    fn download_bits(&self, mask_included: bool) -> u64 {
        let n = self.model.num_params() as u64;
        if self.cfg.algorithm.is_sparse() {
            meter_sparse_transfer(n, self.model.num_retained() as u64, mask_included, Quantizer::Float32)
        } else {
            meter_dense_transfer(n, Quantizer::Float32)
        }
    }

    /// Runs one round: sample, train clients (in parallel, collected in
    /// client order), meter, aggregate and finalize.
    pub fn run_round(&mut self, data: &LabeledDataset, shards: &[ClientShard]) -> Result<RoundOutcome> {
        let r = self.round;
        let t = self.cfg.training;
        let mut rng = stream_rng(self.seed, Stream::ClientSampling, r as u64, 0);
        let sampled = sample_clients(shards.len(), t.clients_per_round, &mut rng)?;

        let mask_down = self.cfg.algorithm.is_sparse() && self.broadcast_mask.as_ref() != Some(&self.model.mask);
        let down_bits = self.download_bits(mask_down);
        self.broadcast_mask = Some(self.model.mask.clone());

        let (model, cfg, base, seed) = (&self.model, &self.cfg, &self.base, self.seed);
        let results: Vec<Result<_>> = sampled
            .par_iter()
            .map(|&c| client_update(&shards[c], data, model, cfg, base, r, seed))
            .collect();

        let mut updates = Vec::with_capacity(results.len());
        let mut failed = 0;
        for (&c, res) in sampled.iter().zip(results) {
            let (up_bits, up_mask) = match res {
                Ok(u) => {
                    let rec = (u.upload_bits, u.mask.is_some());
                    updates.push(u);
                    rec
                }
                Err(Error::Numeric { .. }) => {
                    warn!("round {r}: client {c} diverged and was dropped");
                    failed += 1;
                    (0, false)
                }
                Err(e) => return Err(e),
            };
            self.ledger.record(TransferRecord {
                round: r,
                client: c,
                upload_bits: up_bits,
                download_bits: down_bits,
                upload_mask: up_mask,
                download_mask: mask_down,
            });
        }
        if updates.is_empty() {
            return Err(Error::Round {
                round: r,
                message: format!("all {} sampled clients failed", sampled.len()),
            });
        }

        let old_mask = self.model.mask.clone();
        self.model = match self.cfg.algorithm {
            Algorithm::FedAvg | Algorithm::FedAvgM { .. } | Algorithm::FedProx { .. } => {
                let params = aggregate_dense(&updates)?;
                server_finalize(&self.model, params, old_mask.clone(), &self.base)?
            }
            Algorithm::RandomMask { .. } => {
                let (params, _) = aggregate_sparse(&updates, &self.model)?;
                server_finalize(&self.model, params, old_mask.clone(), &self.base)?
            }
            Algorithm::FedDst { .. } | Algorithm::FedDstProx { .. } => {
                let (params, support) = aggregate_sparse(&updates, &self.model)?;
                server_finalize(&self.model, params, support, &self.base)?
            }
            Algorithm::PruneFl { .. } => {
                let (params, _) = aggregate_sparse(&updates, &self.model)?;
                let mask = if is_prunefl_round(&self.cfg, r) {
                    let grad = aggregate_gradients(&updates)?;
                    prunefl_select_mask(&self.model, &grad, self.base.total_retained())
                } else {
                    old_mask.clone()
                };
                let mut next = self.model.net.clone();
                for (dst, src) in next.params_mut().iter_mut().zip(params) {
                    *dst = src;
                }
                SparseModel::new(next, mask)?
            }
        };

        let outcome = RoundOutcome {
            round: r,
            alpha_r: self.alpha_at(r),
            sampled,
            failed_clients: failed,
            mask_flips: old_mask.hamming(&self.model.mask),
            max_client_flips: updates.iter().map(|u| u.flips).max().unwrap_or(0),
            mean_train_loss: updates.iter().map(|u| u.train_loss).sum::<f64>() / updates.len() as f64,
        };
        self.round += 1;
        Ok(outcome)
    }
}

/// Accuracy and mean cross-entropy of a model on a labelled set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

const EVAL_CHUNK: usize = 250;

/// Top-1 accuracy and mean loss of `θ ⊙ m` on `indices` of `data` (all of
/// it when `None`). Chunks are fixed-size, so the result does not depend
/// on the thread count.
pub fn evaluate(model: &SparseModel, data: &LabeledDataset, indices: Option<&[usize]>) -> Result<Evaluation> {
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..data.len()).collect();
            &all
        }
    };
    if idx.is_empty() {
        return Err(Error::contract("evaluation set is empty"));
    }
    let parts: Vec<Result<(usize, f64)>> = idx
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let (x, y) = data.gather(chunk);
            let logits = model.net.forward(&x)?;
            let classes = model.net.num_classes();
            let mut correct = 0;
            let mut loss = 0.0;
            for (row, &label) in logits.data().chunks(classes).zip(&y) {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                correct += usize::from(best == label);
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
                let lse = max + row.iter().map(|&v| (f64::from(v) - max).exp()).sum::<f64>().ln();
                loss += lse - f64::from(row[label]);
            }
            Ok((correct, loss))
        })
        .collect();
    let (mut correct, mut loss) = (0usize, 0.0f64);
    for part in parts {
        let (c, l) = part?;
        correct += c;
        loss += l;
    }
    Ok(Evaluation {
        accuracy: correct as f64 / idx.len() as f64,
        loss: loss / idx.len() as f64,
    })
}

/// Equal-weight mean of per-client accuracy and loss over the non-empty
/// shards.
pub fn evaluate_clients(model: &SparseModel, data: &LabeledDataset, shards: &[ClientShard]) -> Result<Evaluation> {
    let shards: Vec<&ClientShard> = shards.iter().filter(|s| !s.is_empty()).collect();
    if shards.is_empty() {
        return Err(Error::contract("no non-empty client evaluation shards"));
    }
    let (mut accuracy, mut loss) = (0.0, 0.0);
    for s in &shards {
        let e = evaluate(model, data, Some(&s.indices))?;
        accuracy += e.accuracy;
        loss += e.loss;
    }
    let k = shards.len() as f64;
    Ok(Evaluation {
        accuracy: accuracy / k,
        loss: loss / k,
    })
}
