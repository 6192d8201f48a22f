use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::layer::{col2im_add, im2col, max_pool_forward, ConvGeom};
use crate::nn::{LayerSpec, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Where a parameter tensor lives in the layer stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    pub layer: usize,
    pub kind: ParamKind,
}

/// A sequential network with its parameters and gradient buffers.
///
/// Parameters are stored as a flat list of tensors in layer order (weight
/// before bias); `grads` is shape-congruent with `params` at all times.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
    slots: Vec<ParamSlot>,
    layer_params: Vec<[Option<usize>; 2]>,
}

enum Cache {
    None,
    Argmax(Vec<u32>),
}

impl<T: Scalar> Network<T> {
    /// Builds a network with zero-valued parameters.
    pub fn zeros(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        let mut shapes = vec![input_shape.clone()];
        for layer in &layers {
            let next = layer.output_shape(shapes.last().expect("nonempty"))?;
            shapes.push(next);
        }
        if shapes.last().map(Vec::len) != Some(1) {
            return Err(Error::shape(format!(
                "network output must be a vector, got {:?}",
                shapes.last()
            )));
        }

        let mut params = Vec::new();
        let mut slots = Vec::new();
        let mut layer_params = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let (w, b) = layer.param_shapes();
            let mut entry = [None, None];
            if let Some(shape) = w {
                entry[0] = Some(params.len());
                params.push(Tensor::zeros(shape));
                slots.push(ParamSlot {
                    layer: i,
                    kind: ParamKind::Weight,
                });
            }
            if let Some(shape) = b {
                entry[1] = Some(params.len());
                params.push(Tensor::zeros(shape));
                slots.push(ParamSlot {
                    layer: i,
                    kind: ParamKind::Bias,
                });
            }
            layer_params.push(entry);
        }
        let grads = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Ok(Self {
            input_shape,
            layers,
            shapes,
            params,
            grads,
            slots,
            layer_params,
        })
    }

    /// Builds a network with Kaiming-uniform weights (ReLU gain) and zero
    /// biases.
    pub fn new<R: Rng + ?Sized>(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_shape, layers)?;
        for (slot, param) in net.slots.iter().zip(net.params.iter_mut()) {
            if slot.kind != ParamKind::Weight {
                continue;
            }
            let fan_in = net.layers[slot.layer].fan_in().max(1);
            let bound = (6.0 / fan_in as f64).sqrt();
            for x in param.data_mut() {
                *x = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Per-sample activation shapes; entry `i` is the input of layer `i` and
    /// the last entry is the logits shape.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().expect("nonempty")[0]
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn grads(&self) -> &[Tensor<T>] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.grads
    }

    pub(crate) fn param_and_grad_mut(&mut self, idx: usize) -> (&mut [T], &[T]) {
        (self.params[idx].data_mut(), self.grads[idx].data())
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    /// Parameter indices of prunable tensors (conv and linear weights).
    pub fn prunable_params(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == ParamKind::Weight)
            .map(|(i, _)| i)
            .collect()
    }

    /// Parameter index of each layer's (weight, bias).
    pub fn layer_params(&self, layer: usize) -> [Option<usize>; 2] {
        self.layer_params[layer]
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            grads: self.grads.iter().map(Tensor::cast).collect(),
            slots: self.slots.clone(),
            layer_params: self.layer_params.clone(),
        }
    }

    fn batch_size(&self, batch: &Tensor<T>) -> Result<usize> {
        let shape = batch.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(Error::shape(format!(
                "batch shape {shape:?} does not match network input {:?}",
                self.input_shape
            )));
        }
        Ok(shape[0])
    }

    fn check_labels(&self, labels: &[usize], batch: usize) -> Result<()> {
        if labels.len() != batch {
            return Err(Error::shape(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        let classes = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::contract(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        Ok(())
    }

    /// Logits of shape `(batch, num_classes)`.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.batch_size(batch)?;
        let mut cur = batch.data().to_vec();
        for i in 0..self.layers.len() {
            cur = self.layer_forward(i, &cur, b).0;
        }
        Tensor::new(vec![b, self.num_classes()], cur)
    }

    /// Mean softmax cross-entropy, accumulated in `f64`.
    pub fn loss(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<f64> {
        let logits = self.forward(batch)?;
        self.check_labels(labels, logits.shape()[0])?;
        Ok(softmax_xent(logits.data(), labels, self.num_classes(), false).0)
    }

    /// Computes the mean cross-entropy loss and overwrites `grads` with its
    /// gradient.
    pub fn loss_and_backward(&mut self, batch: &Tensor<T>, labels: &[usize]) -> Result<f64> {
        let b = self.batch_size(batch)?;
        self.check_labels(labels, b)?;

        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        acts.push(batch.data().to_vec());
        for i in 0..self.layers.len() {
            let (out, cache) = self.layer_forward(i, &acts[i], b);
            acts.push(out);
            caches.push(cache);
        }
        let (loss, dlogits) = softmax_xent(
            acts.last().expect("nonempty"),
            labels,
            self.num_classes(),
            true,
        );

        let mut delta = dlogits;
        for i in (0..self.layers.len()).rev() {
            delta = self.layer_backward(i, &acts, &caches[i], delta, b, i > 0);
        }
        Ok(loss)
    }

    /// Predicted class per sample (first maximum wins).
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.forward(batch)?;
        let c = self.num_classes();
        Ok(logits
            .data()
            .chunks(c)
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    fn conv_geom(&self, i: usize) -> ConvGeom {
        let input = &self.shapes[i];
        let out = &self.shapes[i + 1];
        let k = match self.layers[i] {
            LayerSpec::Conv2d { kernel_size, .. } => kernel_size,
            _ => unreachable!("conv_geom on a non-conv layer"),
        };
        ConvGeom {
            c: input[0],
            h: input[1],
            w: input[2],
            oc: out[0],
            k,
            oh: out[1],
            ow: out[2],
        }
    }

    fn layer_forward(&self, i: usize, x: &[T], b: usize) -> (Vec<T>, Cache) {
        let in_len: usize = self.shapes[i].iter().product();
        let out_len: usize = self.shapes[i + 1].iter().product();
        match self.layers[i] {
            LayerSpec::Conv2d { .. } => {
                let g = self.conv_geom(i);
                let [wi, bi] = self.layer_params[i];
                let weight = self.params[wi.expect("conv weight")].data();
                let (ckk, ohw, n) = (g.ckk(), g.ohw(), g.wide_len());
                let mut col = vec![T::zero(); ckk * n];
                let mut wide = vec![T::zero(); g.oc * n];
                let mut out = vec![T::zero(); b * out_len];
                let bias = bi.map(|bi| self.params[bi].data());
                for s in 0..b {
                    im2col(&x[s * in_len..(s + 1) * in_len], &g, &mut col);
                    T::gemm(g.oc, ckk, n, weight, (ckk, 1), &col, (n, 1), &mut wide, (n, 1), false);
                    let dst = &mut out[s * out_len..(s + 1) * out_len];
                    for (o, plane) in dst.chunks_mut(ohw).enumerate() {
                        let bo = bias.map_or(T::zero(), |bias| bias[o]);
                        for (oy, row) in plane.chunks_mut(g.ow).enumerate() {
                            let src = &wide[o * n + oy * g.w..o * n + oy * g.w + g.ow];
                            row.iter_mut().zip(src).for_each(|(v, &w)| *v = w + bo);
                        }
                    }
                }
                (out, Cache::None)
            }
            LayerSpec::MaxPool { window, stride } => {
                let [c, h, w] = [self.shapes[i][0], self.shapes[i][1], self.shapes[i][2]];
                let (out, arg) = max_pool_forward(x, b * c, h, w, window, stride);
                (out, Cache::Argmax(arg))
            }
            LayerSpec::ReLU => (
                x.iter()
                    .map(|&v| if v > T::zero() { v } else { T::zero() })
                    .collect(),
                Cache::None,
            ),
            LayerSpec::Flatten => (x.to_vec(), Cache::None),
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => {
                let [wi, bi] = self.layer_params[i];
                let weight = self.params[wi.expect("linear weight")].data();
                let mut out = vec![T::zero(); b * out_features];
                T::gemm(
                    b,
                    in_features,
                    out_features,
                    x,
                    (in_features, 1),
                    weight,
                    (1, in_features),
                    &mut out,
                    (out_features, 1),
                    false,
                );
                if let Some(bi) = bi {
                    let bias = self.params[bi].data();
                    for row in out.chunks_mut(out_features) {
                        row.iter_mut().zip(bias).for_each(|(v, &bb)| *v = *v + bb);
                    }
                }
                (out, Cache::None)
            }
        }
    }

    /// Backpropagates `delta` (gradient w.r.t. the layer output) through
    /// layer `i`, writing parameter gradients and returning the gradient
    /// w.r.t. the layer input (empty when `need_input_grad` is false).
    fn layer_backward(
        &mut self,
        i: usize,
        acts: &[Vec<T>],
        cache: &Cache,
        delta: Vec<T>,
        b: usize,
        need_input_grad: bool,
    ) -> Vec<T> {
        let in_len: usize = self.shapes[i].iter().product();
        let out_len: usize = self.shapes[i + 1].iter().product();
        match (self.layers[i], cache) {
            (LayerSpec::Conv2d { .. }, _) => {
                let g = self.conv_geom(i);
                let (ckk, ohw) = (g.ckk(), g.ohw());
                let [wi, bi] = self.layer_params[i];
                let wi = wi.expect("conv weight");
                if let Some(bi) = bi {
                    let db = self.grads[bi].data_mut();
                    db.iter_mut().for_each(|x| *x = T::zero());
                    for s in 0..b {
                        for (o, row) in delta[s * out_len..(s + 1) * out_len].chunks(ohw).enumerate() {
                            db[o] = row.iter().fold(db[o], |acc, &v| acc + v);
                        }
                    }
                }
                let x = &acts[i];
                let n = g.wide_len();
                let mut col = vec![T::zero(); ckk * n];
                let mut dcols = vec![T::zero(); ckk * n];
                // Padding columns of `d` stay zero for every sample.
                let mut d = vec![T::zero(); g.oc * n];
                let mut dx = vec![T::zero(); if need_input_grad { b * in_len } else { 0 }];
                self.grads[wi].fill(T::zero());
                for s in 0..b {
                    for (o, plane) in delta[s * out_len..(s + 1) * out_len].chunks(ohw).enumerate() {
                        for (oy, row) in plane.chunks(g.ow).enumerate() {
                            d[o * n + oy * g.w..o * n + oy * g.w + g.ow].copy_from_slice(row);
                        }
                    }
                    im2col(&x[s * in_len..(s + 1) * in_len], &g, &mut col);
                    T::gemm(
                        g.oc,
                        n,
                        ckk,
                        &d,
                        (n, 1),
                        &col,
                        (1, n),
                        self.grads[wi].data_mut(),
                        (ckk, 1),
                        true,
                    );
                    if need_input_grad {
                        T::gemm(
                            ckk,
                            g.oc,
                            n,
                            self.params[wi].data(),
                            (1, ckk),
                            &d,
                            (n, 1),
                            &mut dcols,
                            (n, 1),
                            false,
                        );
                        col2im_add(&dcols, &g, &mut dx[s * in_len..(s + 1) * in_len]);
                    }
                }
                dx
            }
            (LayerSpec::MaxPool { .. }, Cache::Argmax(arg)) => {
                let mut dx = vec![T::zero(); b * in_len];
                for (&a, &d) in arg.iter().zip(&delta) {
                    dx[a as usize] = dx[a as usize] + d;
                }
                dx
            }
            (LayerSpec::ReLU, _) => delta
                .iter()
                .zip(&acts[i + 1])
                .map(|(&d, &y)| if y > T::zero() { d } else { T::zero() })
                .collect(),
            (LayerSpec::Flatten, _) => delta,
            (
                LayerSpec::Linear {
                    in_features,
                    out_features,
                    ..
                },
                _,
            ) => {
                let x = &acts[i];
                let [wi, bi] = self.layer_params[i];
                let wi = wi.expect("linear weight");
                T::gemm(
                    out_features,
                    b,
                    in_features,
                    &delta,
                    (1, out_features),
                    x,
                    (in_features, 1),
                    self.grads[wi].data_mut(),
                    (in_features, 1),
                    false,
                );
                if b == 0 {
                    self.grads[wi].fill(T::zero());
                }
                if let Some(bi) = bi {
                    let db = self.grads[bi].data_mut();
                    db.iter_mut().for_each(|x| *x = T::zero());
                    for row in delta.chunks(out_features) {
                        db.iter_mut().zip(row).for_each(|(a, &d)| *a = *a + d);
                    }
                }
                if !need_input_grad {
                    return Vec::new();
                }
                let mut dx = vec![T::zero(); b * in_features];
                T::gemm(
                    b,
                    out_features,
                    in_features,
                    &delta,
                    (out_features, 1),
                    self.params[wi].data(),
                    (in_features, 1),
                    &mut dx,
                    (in_features, 1),
                    false,
                );
                dx
            }
            _ => unreachable!("cache kind does not match layer"),
        }
    }
}

/// Mean cross-entropy over rows of `logits`; optionally the gradient
/// `(softmax − onehot) / batch`.
fn softmax_xent<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    classes: usize,
    want_grad: bool,
) -> (f64, Vec<T>) {
    let b = labels.len();
    let mut total = 0.0f64;
    let mut grad = if want_grad {
        vec![T::zero(); logits.len()]
    } else {
        Vec::new()
    };
    for (s, row) in logits.chunks(classes).enumerate() {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.as_f64()));
        let sum: f64 = row.iter().map(|&v| (v.as_f64() - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[labels[s]].as_f64();
        if want_grad {
            for (j, &v) in row.iter().enumerate() {
                let p = (v.as_f64() - lse).exp();
                let y = if j == labels[s] { 1.0 } else { 0.0 };
                grad[s * classes + j] = T::from_f64((p - y) / b as f64);
            }
        }
    }
    let loss = if b == 0 { 0.0 } else { total / b as f64 };
    (loss, grad)
}
