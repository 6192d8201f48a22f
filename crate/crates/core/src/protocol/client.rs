use rand::seq::SliceRandom;

use crate::data::{ClientShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::ledger::{meter_dense_transfer, meter_sparse_transfer};
use crate::nn::{OptimizerState, Proximal, Tensor};
use crate::protocol::{Algorithm, AlgorithmConfig};
use crate::rng::{stream_rng, Stream};
use crate::sparsity::{readjust, Mask, SparseModel, SparsityDistribution};

/// What a client sends back after local training.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client: usize,
    /// Full parameter list; only retained weights carry information.
    pub params: Vec<Tensor<f32>>,
    /// Present iff the client's mask differs from the one it received.
    pub mask: Option<Mask>,
    /// `n_c`.
    pub sample_count: usize,
    /// Mean raw gradient over all local steps; PruneFL selection rounds only.
    pub dense_grad: Option<Vec<Tensor<f32>>>,
    /// Positions whose mask bit changed during readjustment.
    pub flips: usize,
    /// Mean minibatch loss over local steps.
    pub train_loss: f64,
    pub upload_bits: u64,
}

impl ClientUpdate {
    /// The mask the update's values live under.
    pub fn effective_mask<'a>(&'a self, received: &'a Mask) -> &'a Mask {
        self.mask.as_ref().unwrap_or(received)
    }
}

/// Whether round `r` is a PruneFL mask-selection round.
pub(crate) fn is_prunefl_round(cfg: &AlgorithmConfig, round: usize) -> bool {
    matches!(cfg.algorithm, Algorithm::PruneFl { rounds_between, .. } if round % rounds_between == 0)
}

/// Runs `E` local epochs of masked momentum SGD on `shard`, readjusting the
/// mask after epoch `E_p` on FedDST readjustment rounds.
///
/// Randomness comes only from the `(seed, round, client)` training stream.
pub fn client_update(
    shard: &ClientShard,
    data: &LabeledDataset,
    model: &SparseModel,
    cfg: &AlgorithmConfig,
    base: &SparsityDistribution,
    round: usize,
    seed: u64,
) -> Result<ClientUpdate> {
    let t = &cfg.training;
    let sparse = cfg.algorithm.is_sparse();
    let mut local = model.clone();
    let mut opt = OptimizerState::new(&local.net, t.learning_rate, cfg.client_momentum(), t.weight_decay);
    let mu = cfg.algorithm.mu();
    let anchor = model.net.params();

    let readjust_alpha = cfg
        .algorithm
        .schedule()
        .filter(|s| s.is_readjust_round(round))
        .map(|s| (s.readjust_epoch, s.alpha_at(round)))
        .filter(|&(_, a)| a > 0.0);
    let prunefl = is_prunefl_round(cfg, round);
    let mut grad_sum: Option<Vec<Tensor<f32>>> =
        prunefl.then(|| anchor.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect());

    let mut rng = stream_rng(seed, Stream::ClientTraining, round as u64, shard.client as u64);
    let mut order = shard.indices.clone();
    let mut loss_sum = 0.0;
    let mut steps = 0usize;
    let mut flips = 0;
    for epoch in 1..=t.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(t.batch_size) {
            let (x, y) = data.gather(batch);
            let loss = local.net.loss_and_backward(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    round,
                    client: shard.client,
                });
            }
            loss_sum += loss;
            steps += 1;
            if let Some(acc) = grad_sum.as_mut() {
                for (a, g) in acc.iter_mut().zip(local.net.grads()) {
                    a.data_mut().iter_mut().zip(g.data()).for_each(|(a, &g)| *a += g);
                }
            }
            let prox = (mu > 0.0).then_some(Proximal { anchor, mu });
            opt.step(&mut local.net, sparse.then_some(&local.mask), prox);
        }
        if let Some((readjust_epoch, alpha_r)) = readjust_alpha {
            if epoch == readjust_epoch && steps > 0 {
                let grads = local.net.grads().to_vec();
                flips = readjust(&mut local, &grads, alpha_r, base)?.flipped;
            }
        }
    }
    if !local.net.params().iter().all(Tensor::all_finite) {
        return Err(Error::Numeric {
            round,
            client: shard.client,
        });
    }

    let mask = (local.mask != model.mask).then(|| local.mask.clone());
    let n = local.num_params() as u64;
    let mut upload_bits = if sparse {
        meter_sparse_transfer(n, local.num_retained() as u64, mask.is_some(), t.upload)
    } else {
        meter_dense_transfer(n, t.upload)
    };
    let dense_grad = grad_sum.map(|mut acc| {
        let scale = 1.0 / steps.max(1) as f32;
        for a in &mut acc {
            a.data_mut().iter_mut().for_each(|v| *v *= scale);
            t.upload.apply_slice(a.data_mut());
        }
        upload_bits += meter_dense_transfer(n, t.upload);
        acc
    });
    let mut params: Vec<Tensor<f32>> = local.net.params().to_vec();
    for p in &mut params {
        t.upload.apply_slice(p.data_mut());
    }
    Ok(ClientUpdate {
        client: shard.client,
        params,
        mask,
        sample_count: shard.len(),
        dense_grad,
        flips,
        train_loss: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
        upload_bits,
    })
}
