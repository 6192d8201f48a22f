use crate::error::{Error, Result};
use crate::nn::Scalar;

/// One layer of a sequential network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Valid (unpadded) stride-1 convolution with a square kernel.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        has_bias: bool,
    },
    /// Valid max pooling with a square window.
    MaxPool { window: usize, stride: usize },
    ReLU,
    Flatten,
    Linear {
        in_features: usize,
        out_features: usize,
        has_bias: bool,
    },
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_size,
            has_bias: true,
        }
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Linear {
            in_features,
            out_features,
            has_bias: true,
        }
    }

    pub fn max_pool(window: usize, stride: usize) -> Self {
        LayerSpec::MaxPool { window, stride }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            } => {
                let [c, h, w] = chw(input, "Conv2d")?;
                if c != in_channels {
                    return Err(Error::shape(format!(
                        "Conv2d expects {in_channels} input channels, got {c}"
                    )));
                }
                if kernel_size == 0 || h < kernel_size || w < kernel_size {
                    return Err(Error::shape(format!(
                        "kernel {kernel_size} does not fit a {h}x{w} plane"
                    )));
                }
                Ok(vec![out_channels, h - kernel_size + 1, w - kernel_size + 1])
            }
            LayerSpec::MaxPool { window, stride } => {
                let [c, h, w] = chw(input, "MaxPool")?;
                if window == 0 || stride == 0 || h < window || w < window {
                    return Err(Error::shape(format!(
                        "pool window {window}/stride {stride} does not fit a {h}x{w} plane"
                    )));
                }
                Ok(vec![c, (h - window) / stride + 1, (w - window) / stride + 1])
            }
            LayerSpec::ReLU => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => {
                if input.len() != 1 || input[0] != in_features {
                    return Err(Error::shape(format!(
                        "Linear expects [{in_features}], got {input:?}"
                    )));
                }
                Ok(vec![out_features])
            }
        }
    }

    /// Shapes of (weight, bias) for parameterized layers.
    pub fn param_shapes(&self) -> (Option<Vec<usize>>, Option<Vec<usize>>) {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                has_bias,
            } => (
                Some(vec![out_channels, in_channels, kernel_size, kernel_size]),
                has_bias.then(|| vec![out_channels]),
            ),
            LayerSpec::Linear {
                in_features,
                out_features,
                has_bias,
            } => (
                Some(vec![out_features, in_features]),
                has_bias.then(|| vec![out_features]),
            ),
            _ => (None, None),
        }
    }

    /// Fan-in used for Kaiming initialization.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                kernel_size,
                ..
            } => in_channels * kernel_size * kernel_size,
            LayerSpec::Linear { in_features, .. } => in_features,
            _ => 0,
        }
    }
}

fn chw(input: &[usize], layer: &str) -> Result<[usize; 3]> {
    match input {
        &[c, h, w] => Ok([c, h, w]),
        _ => Err(Error::shape(format!(
            "{layer} expects a [C, H, W] input, got {input:?}"
        ))),
    }
}

/// Geometry of a convolution applied to one sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub k: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn ohw(&self) -> usize {
        self.oh * self.ow
    }

    #[cfg(test)]
    pub fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Row length of the wide column matrix: output rows laid out with the
    /// input row pitch `W`.
    pub fn wide_len(&self) -> usize {
        (self.oh - 1) * self.w + self.ow
    }
}

/// Unfolds one sample into a `(C·K·K) × wide_len` column matrix. Column `p`
/// corresponds to output position `(p / W, p % W)`; positions with
/// `p % W >= OW` are padding and must be ignored by the caller.
pub(crate) fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let n = g.wide_len();
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = (ci * g.h + ky) * g.w + kx;
                cols[row * n..(row + 1) * n].copy_from_slice(&x[src..src + n]);
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds a wide column matrix back into one sample's
/// input gradient.
pub(crate) fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let n = g.wide_len();
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = (ci * g.h + ky) * g.w + kx;
                for (d, &s) in dx[dst..dst + n].iter_mut().zip(&cols[row * n..(row + 1) * n]) {
                    *d = *d + s;
                }
            }
        }
    }
}

/// Max pooling over `[batch·channels]` planes; returns outputs and, for each
/// output, the flat input index that produced it (first maximum wins).
pub(crate) fn max_pool_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    window: usize,
    stride: usize,
) -> (Vec<T>, Vec<u32>) {
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = vec![T::zero(); planes * oh * ow];
    let mut arg = vec![0u32; planes * oh * ow];
    let mut hv = vec![T::zero(); h * ow];
    let mut hi = vec![0u32; h * ow];
    for p in 0..planes {
        let plane = &x[p * h * w..(p + 1) * h * w];
        let base = p * h * w;
        let o = p * oh * ow;
        let out_p = &mut out[o..o + oh * ow];
        let arg_p = &mut arg[o..o + oh * ow];
        if stride == 1 {
            // Separable: row maxima, then a column pass. Strict `>` in both
            // passes keeps the first maximum in row-major window order.
            for y in 0..h {
                let row = &plane[y * w..(y + 1) * w];
                let hv_r = &mut hv[y * ow..(y + 1) * ow];
                let hi_r = &mut hi[y * ow..(y + 1) * ow];
                let row_base = (base + y * w) as u32;
                hv_r.copy_from_slice(&row[..ow]);
                for (ox, v) in hi_r.iter_mut().enumerate() {
                    *v = row_base + ox as u32;
                }
                for dx in 1..window {
                    let cand = &row[dx..dx + ow];
                    for (ox, ((best, bi), &v)) in
                        hv_r.iter_mut().zip(hi_r.iter_mut()).zip(cand).enumerate()
                    {
                        let m = ((v > *best) as u32).wrapping_neg();
                        *best = if v > *best { v } else { *best };
                        *bi = (m & (row_base + (ox + dx) as u32)) | (!m & *bi);
                    }
                }
            }
            for oy in 0..oh {
                let dst = &mut out_p[oy * ow..(oy + 1) * ow];
                let dst_i = &mut arg_p[oy * ow..(oy + 1) * ow];
                dst.copy_from_slice(&hv[oy * ow..(oy + 1) * ow]);
                dst_i.copy_from_slice(&hi[oy * ow..(oy + 1) * ow]);
                for dy in 1..window {
                    let r = (oy + dy) * ow;
                    let (cv, ci) = (&hv[r..r + ow], &hi[r..r + ow]);
                    for (((best, bi), &v), &vi) in dst.iter_mut().zip(dst_i.iter_mut()).zip(cv).zip(ci) {
                        let m = ((v > *best) as u32).wrapping_neg();
                        *best = if v > *best { v } else { *best };
                        *bi = (m & vi) | (!m & *bi);
                    }
                }
            }
            continue;
        }
        for oy in 0..oh {
            for ox in 0..ow {
                let mut bi = oy * stride * w + ox * stride;
                let mut best = plane[bi];
                for dy in 0..window {
                    let row = (oy * stride + dy) * w + ox * stride;
                    for (dx, &v) in plane[row..row + window].iter().enumerate() {
                        if v > best {
                            best = v;
                            bi = row + dx;
                        }
                    }
                }
                out_p[oy * ow + ox] = best;
                arg_p[oy * ow + ox] = (base + bi) as u32;
            }
        }
    }
    (out, arg)
}
