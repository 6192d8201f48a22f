use crate::error::{Error, Result};
use crate::nn::{Network, Scalar, Tensor};

/// Central finite-difference estimate of every parameter gradient.
///
/// The network is evaluated in `f64` regardless of `T`, so the estimate is
/// an independent reference for the analytic `f32` backward pass.
pub fn finite_diff_grads<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    step: f64,
) -> Result<Vec<Tensor<f64>>> {
    if !(step > 0.0) {
        return Err(Error::contract(format!("finite-difference step {step} must be > 0")));
    }
    let mut probe: Network<f64> = net.cast();
    let batch = batch.cast::<f64>();
    let mut out = Vec::with_capacity(probe.params().len());
    for p in 0..probe.params().len() {
        let shape = probe.params()[p].shape().to_vec();
        let mut est = Vec::with_capacity(probe.params()[p].len());
        for j in 0..probe.params()[p].len() {
            let orig = probe.params()[p].data()[j];
            probe.params_mut()[p].data_mut()[j] = orig + step;
            let plus = probe.loss(&batch, labels)?;
            probe.params_mut()[p].data_mut()[j] = orig - step;
            let minus = probe.loss(&batch, labels)?;
            probe.params_mut()[p].data_mut()[j] = orig;
            est.push((plus - minus) / (2.0 * step));
        }
        out.push(Tensor::new(shape, est)?);
    }
    Ok(out)
}

/// Largest coordinate-wise `|a − b| / max(|a|, |b|, floor)` over all tensors.
pub fn max_relative_error<T: Scalar>(analytic: &[Tensor<T>], numeric: &[Tensor<f64>], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| {
            let a = a.as_f64();
            (a - n).abs() / a.abs().max(n.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}
