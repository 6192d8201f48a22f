use crate::error::{Error, Result};
use crate::nn::{ParamKind, Tensor};
use crate::protocol::ClientUpdate;
use crate::sparsity::{prune_layerwise, top_k_by_magnitude, Mask, SparseModel, SparsityDistribution};

/// `θ[i] = Σ n_c θ_c[i] / Σ n_c`, accumulated in `f64` in update order.
pub fn aggregate_dense(updates: &[ClientUpdate]) -> Result<Vec<Tensor<f32>>> {
    let first = updates
        .first()
        .ok_or_else(|| Error::contract("aggregate_dense needs at least one update"))?;
    let den: f64 = updates.iter().map(|u| u.sample_count as f64).sum();
    Ok((0..first.params.len())
        .map(|p| {
            let len = first.params[p].len();
            let mut num = vec![0.0f64; len];
            for u in updates {
                let n = u.sample_count as f64;
                for (a, &v) in num.iter_mut().zip(u.params[p].data()) {
                    *a += n * f64::from(v);
                }
            }
            let data = num.iter().map(|&a| (a / den) as f32).collect();
            Tensor::new(first.params[p].shape().to_vec(), data).expect("same shape")
        })
        .collect())
}

/// Sparse weighted average over each update's mask:
/// `θ[i] = Σ n_c θ_c[i] m_c[i] / Σ n_c m_c[i]`, falling back to
/// `θ^r[i]·m^r[i]` where no client retains `i`. Non-prunable parameters are
/// averaged densely.
///
/// Returns the averaged parameters and their support: positions retained
/// by some client, or carried over from the server mask.
pub fn aggregate_sparse(updates: &[ClientUpdate], previous: &SparseModel) -> Result<(Vec<Tensor<f32>>, Mask)> {
    if updates.is_empty() {
        return Err(Error::contract("aggregate_sparse needs at least one update"));
    }
    let masks: Vec<&Mask> = updates.iter().map(|u| u.effective_mask(&previous.mask)).collect();
    let mut support = previous.mask.clone();
    let mut out = Vec::with_capacity(previous.net.params().len());
    let mut layer = 0;
    for (p, slot) in previous.net.slots().iter().enumerate() {
        let prev = previous.net.params()[p].data();
        let len = prev.len();
        let mut num = vec![0.0f64; len];
        let mut den = vec![0.0f64; len];
        let prunable = slot.kind == ParamKind::Weight;
        for (u, m) in updates.iter().zip(&masks) {
            let n = u.sample_count as f64;
            let vals = u.params[p].data();
            if prunable {
                let keep = m.layer(layer);
                for j in 0..len {
                    if keep[j] {
                        num[j] += n * f64::from(vals[j]);
                        den[j] += n;
                    }
                }
            } else {
                for j in 0..len {
                    num[j] += n * f64::from(vals[j]);
                    den[j] += n;
                }
            }
        }
        let data: Vec<f32> = (0..len)
            .map(|j| if den[j] > 0.0 { (num[j] / den[j]) as f32 } else { prev[j] })
            .collect();
        if prunable {
            for (s, &d) in support.layer_mut(layer).iter_mut().zip(&den) {
                *s = *s || d > 0.0;
            }
            layer += 1;
        }
        out.push(Tensor::new(previous.net.params()[p].shape().to_vec(), data)?);
    }
    Ok((out, support))
}

/// Installs `params` under `support` and magnitude-prunes each layer to
/// `target`'s counts.
pub fn server_finalize(
    template: &SparseModel,
    params: Vec<Tensor<f32>>,
    support: Mask,
    target: &SparsityDistribution,
) -> Result<SparseModel> {
    let mut net = template.net.clone();
    for (dst, src) in net.params_mut().iter_mut().zip(params) {
        *dst = src;
    }
    let mut model = SparseModel::new(net, support)?;
    prune_layerwise(&mut model, target)?;
    Ok(model)
}

/// PruneFL mask selection: the `k` prunable positions with the largest
/// `g²/t`, globally across layers. With a uniform `t` this is the order of
/// `|g|`; ties go to the lower position in layer-concatenated order.
pub fn prunefl_select_mask(model: &SparseModel, grad: &[Tensor<f32>], k: usize) -> Mask {
    let prunable = model.net.prunable_params();
    let flat: Vec<f32> = prunable.iter().flat_map(|&p| grad[p].data().iter().copied()).collect();
    let keep = top_k_by_magnitude(&flat, k);
    let mut start = 0;
    Mask::from_layers(
        prunable
            .iter()
            .map(|&p| {
                let len = grad[p].len();
                start += len;
                keep[start - len..start].to_vec()
            })
            .collect(),
    )
}

/// Weighted mean of the updates' dense gradients.
pub(crate) fn aggregate_gradients(updates: &[ClientUpdate]) -> Result<Vec<Tensor<f32>>> {
    let as_params: Vec<ClientUpdate> = updates
        .iter()
        .map(|u| {
            let grad = u
                .dense_grad
                .clone()
                .ok_or_else(|| Error::contract(format!("client {} sent no gradient", u.client)))?;
            Ok(ClientUpdate {
                params: grad,
                dense_grad: None,
                ..u.clone()
            })
        })
        .collect::<Result<_>>()?;
    aggregate_dense(&as_params)
}
