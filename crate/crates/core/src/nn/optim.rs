use crate::nn::{Network, ParamKind, Scalar, Tensor};
use crate::sparsity::Mask;

/// Momentum SGD with L2 regularization.
///
/// `v ← βv + (g + λθ)`, `θ ← θ − ηv`. Velocity starts at zero.
#[derive(Debug, Clone)]
pub struct OptimizerState<T: Scalar = f32> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor<T>>,
}

/// FedProx anchor: adds `μ(θ − θ_anchor)` to the applied gradient.
#[derive(Debug, Clone, Copy)]
pub struct Proximal<'a, T: Scalar = f32> {
    pub anchor: &'a [Tensor<T>],
    pub mu: f64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(net: &Network<T>, learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            weight_decay,
            velocity: net
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
        }
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    /// Applies one update from `net.grads`. The gradient buffers are left
    /// untouched so callers can still read the raw loss gradient.
    ///
    /// With a mask, masked-out weights and their velocity are forced to zero.
    pub fn step(&mut self, net: &mut Network<T>, mask: Option<&Mask>, prox: Option<Proximal<'_, T>>) {
        let lr = T::from_f64(self.learning_rate);
        let beta = T::from_f64(self.momentum);
        let decay = T::from_f64(self.weight_decay);
        let prox = prox.filter(|p| p.mu > 0.0);
        let mu = prox.map(|p| T::from_f64(p.mu));

        let slots = net.slots().to_vec();
        let mut prunable = 0usize;
        for (idx, slot) in slots.iter().enumerate() {
            let keep = match (slot.kind, mask) {
                (ParamKind::Weight, Some(m)) => {
                    prunable += 1;
                    Some(m.layer(prunable - 1))
                }
                (ParamKind::Weight, None) => {
                    prunable += 1;
                    None
                }
                _ => None,
            };
            let anchor = prox.map(|p| p.anchor[idx].data());
            let (params, grads) = net.param_and_grad_mut(idx);
            let velocity = self.velocity[idx].data_mut();
            for j in 0..params.len() {
                if let Some(keep) = keep {
                    if !keep[j] {
                        params[j] = T::zero();
                        velocity[j] = T::zero();
                        continue;
                    }
                }
                let theta = params[j];
                let mut d = grads[j] + decay * theta;
                if let (Some(anchor), Some(mu)) = (anchor, mu) {
                    d = d + mu * (theta - anchor[j]);
                }
                velocity[j] = beta * velocity[j] + d;
                params[j] = theta - lr * velocity[j];
            }
        }
    }
}

/// Free-function form of [`OptimizerState::step`] without a proximal term.
pub fn sgd_step<T: Scalar>(net: &mut Network<T>, opt: &mut OptimizerState<T>, mask: Option<&Mask>) {
    opt.step(net, mask, None);
}
