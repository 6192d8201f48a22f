//! Minimal dense neural-network engine.
//!
//! Supports exactly what the two small CNNs of the simulator need: 2-D
//! convolution (valid, stride 1), max pooling, ReLU, flatten and fully
//! connected layers, trained with softmax cross-entropy and momentum SGD.
//! The engine is generic over the scalar type so the same code path can be
//! run in `f64` for finite-difference gradient checks.

mod gradcheck;
mod layer;
mod model;
mod network;
mod optim;
mod scalar;
mod tensor;

pub use gradcheck::{finite_diff_grads, max_relative_error};
pub use layer::LayerSpec;
pub use model::{build_model, Arch};
pub use network::{Network, ParamKind, ParamSlot};
pub use optim::{sgd_step, OptimizerState, Proximal};
pub use scalar::Scalar;
pub use tensor::Tensor;
