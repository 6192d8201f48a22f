use crate::error::{Error, Result};
use crate::nn::Network;
use crate::sparsity::Mask;

/// Network parameters together with their keep-mask; the unit exchanged
/// between server and clients.
#[derive(Debug, Clone)]
pub struct SparseModel {
    pub net: Network<f32>,
    pub mask: Mask,
}

impl SparseModel {
    /// Pairs `net` with `mask`, zeroing masked-out weights.
    pub fn new(mut net: Network<f32>, mask: Mask) -> Result<Self> {
        if !mask.matches_network(&net) {
            return Err(Error::shape("mask layers do not match the network's prunable weights"));
        }
        mask.apply(&mut net);
        Ok(Self { net, mask })
    }

    pub fn dense(net: Network<f32>) -> Self {
        let mask = Mask::dense_for(&net);
        Self { net, mask }
    }

    /// `n`: every trainable parameter, biases included.
    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    /// Parameters that are transmitted as values: retained weights plus all
    /// dense (non-prunable) parameters.
    pub fn num_retained(&self) -> usize {
        self.num_params() - (self.mask.len() - self.mask.nnz())
    }

    pub fn satisfies_mask(&self) -> bool {
        self.mask.is_satisfied_by(&self.net)
    }
}
