use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::sparsity::{Mask, SparseModel, SparsityDistribution};

/// Outcome of one prune-then-grow readjustment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadjustReport {
    pub pruned: usize,
    pub grown: usize,
    /// Net Hamming distance between the masks before and after.
    pub flipped: usize,
}

/// Larger magnitude first, then lower flat index.
fn by_magnitude_desc(values: &[f32]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        values[b]
            .abs()
            .total_cmp(&values[a].abs())
            .then(a.cmp(&b))
    }
}

/// Indices of the `k` largest-magnitude entries among `candidates`, ranked
/// by `|value|` descending with ties going to the lower index.
fn top_k(candidates: &mut [usize], values: &[f32], k: usize) -> usize {
    if k == 0 || k >= candidates.len() {
        return k.min(candidates.len());
    }
    candidates.select_nth_unstable_by(k - 1, by_magnitude_desc(values));
    k
}

/// Keep-mask of the `k` largest-magnitude entries of `values`.
pub fn top_k_by_magnitude(values: &[f32], k: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let k = top_k(&mut idx, values, k);
    let mut keep = vec![false; values.len()];
    for &i in &idx[..k] {
        keep[i] = true;
    }
    keep
}

fn check_layers(model: &SparseModel, target: &SparsityDistribution) -> Result<()> {
    if target.sizes() != model.mask.layer_sizes().as_slice() {
        return Err(Error::contract(
            "sparsity distribution does not match the model's prunable layers",
        ));
    }
    Ok(())
}

fn prune_layer(weights: &mut [f32], keep: &mut [bool], target: usize) -> Result<Vec<usize>> {
    let mut retained: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    if target > retained.len() {
        return Err(Error::contract(format!(
            "pruning cannot raise a layer from {} to {target} weights",
            retained.len()
        )));
    }
    top_k(&mut retained, weights, target);
    let pruned = retained.split_off(target);
    for &i in &pruned {
        keep[i] = false;
        weights[i] = 0.0;
    }
    Ok(pruned)
}

fn grow_layer(
    weights: &mut [f32],
    keep: &mut [bool],
    grads: &[f32],
    target: usize,
) -> Result<Vec<usize>> {
    let mut candidates: Vec<usize> = (0..keep.len()).filter(|&i| !keep[i]).collect();
    let current = keep.len() - candidates.len();
    if target < current {
        return Err(Error::contract(format!(
            "growth cannot lower a layer from {current} to {target} weights"
        )));
    }
    let need = target - current;
    if need > candidates.len() {
        return Err(Error::contract(format!(
            "cannot grow {need} weights from {} pruned positions",
            candidates.len()
        )));
    }
    top_k(&mut candidates, grads, need);
    candidates.truncate(need);
    for &i in &candidates {
        keep[i] = true;
        weights[i] = 0.0;
    }
    Ok(candidates)
}

/// Layer-wise magnitude pruning down to `target`'s retained counts.
///
/// Within each layer the smallest-`|θ|` retained weights are masked out and
/// zeroed; on equal magnitudes the higher flat index is pruned first.
/// Returns the number of pruned weights.
pub fn prune_layerwise(model: &mut SparseModel, target: &SparsityDistribution) -> Result<usize> {
    check_layers(model, target)?;
    let prunable = model.net.prunable_params();
    let mut total = 0;
    for (l, &p) in prunable.iter().enumerate() {
        let weights = model.net.params_mut()[p].data_mut();
        total += prune_layer(weights, model.mask.layer_mut(l), target.retained()[l])?.len();
    }
    Ok(total)
}

/// Layer-wise gradient-magnitude growth up to `target`'s retained counts.
///
/// `grads` is the full per-parameter gradient list of the network (same
/// layout as `net.params()`); only masked-out positions compete, largest
/// `|g|` first, ties to the lower index. Grown weights start at exactly 0.
pub fn grow_gradient_magnitude(
    model: &mut SparseModel,
    grads: &[Tensor<f32>],
    target: &SparsityDistribution,
) -> Result<usize> {
    check_layers(model, target)?;
    if grads.len() != model.net.params().len() {
        return Err(Error::shape("gradient list does not match the network's parameters"));
    }
    let prunable = model.net.prunable_params();
    let mut total = 0;
    for (l, &p) in prunable.iter().enumerate() {
        let g = grads[p].data();
        let weights = model.net.params_mut()[p].data_mut();
        total += grow_layer(weights, model.mask.layer_mut(l), g, target.retained()[l])?.len();
    }
    Ok(total)
}

/// Prunes to `base` inflated by `alpha_r` (per-layer sparsity
/// `s + (1 − s)·α_r`), then regrows by gradient magnitude back to `base`.
///
/// Positions pruned in this call may be regrown in the same call.
pub fn readjust(
    model: &mut SparseModel,
    grads: &[Tensor<f32>],
    alpha_r: f64,
    base: &SparsityDistribution,
) -> Result<ReadjustReport> {
    check_layers(model, base)?;
    if alpha_r <= 0.0 {
        return Ok(ReadjustReport::default());
    }
    let before: Mask = model.mask.clone();
    let pruned = prune_layerwise(model, &base.inflated(alpha_r))?;
    let grown = grow_gradient_magnitude(model, grads, base)?;
    Ok(ReadjustReport {
        pruned,
        grown,
        flipped: before.hamming(&model.mask),
    })
}
