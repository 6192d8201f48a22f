use crate::nn::{LayerSpec, Network, Scalar};
use crate::sparsity::Mask;

/// Forward-pass FLOPs for one sample, counting a multiply-add as two.
///
/// Only conv and linear layers are counted. With a mask, each layer's count
/// is scaled by that layer's density.
pub fn flops_forward<T: Scalar>(net: &Network<T>, mask: Option<&Mask>) -> f64 {
    let mut prunable = 0;
    let mut total = 0.0;
    for (i, layer) in net.layers().iter().enumerate() {
        let out = &net.shapes()[i + 1];
        let dense = match *layer {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            } => 2.0 * (in_channels * kernel_size * kernel_size * out_channels * out[1] * out[2]) as f64,
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => 2.0 * (in_features * out_features) as f64,
            _ => continue,
        };
        let density = mask.map_or(1.0, |m| {
            let keep = m.layer(prunable);
            keep.iter().filter(|&&b| b).count() as f64 / keep.len() as f64
        });
        prunable += 1;
        total += dense * density;
    }
    total
}
