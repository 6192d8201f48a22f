use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network};

/// The two built-in architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    MnistCnn,
    Cifar10Cnn,
}

impl Arch {
    pub fn input_shape(self) -> Vec<usize> {
        match self {
            Arch::MnistCnn => vec![1, 28, 28],
            Arch::Cifar10Cnn => vec![3, 32, 32],
        }
    }

    pub fn layers(self) -> Vec<LayerSpec> {
        use LayerSpec::{Flatten, ReLU};
        let pool = LayerSpec::max_pool(3, 1);
        match self {
            // 28 -conv5-> 24 -pool3/1-> 22 -conv5-> 18 -pool3/1-> 16
            Arch::MnistCnn => vec![
                LayerSpec::conv(1, 10, 5),
                pool,
                ReLU,
                LayerSpec::conv(10, 20, 5),
                pool,
                ReLU,
                Flatten,
                LayerSpec::linear(20 * 16 * 16, 50),
                ReLU,
                LayerSpec::linear(50, 10),
            ],
            // 32 -conv5-> 28 -pool3/1-> 26 -conv5-> 22 -pool3/1-> 20
            Arch::Cifar10Cnn => vec![
                LayerSpec::conv(3, 6, 5),
                pool,
                ReLU,
                LayerSpec::conv(6, 16, 5),
                pool,
                ReLU,
                Flatten,
                LayerSpec::linear(16 * 20 * 20, 120),
                ReLU,
                LayerSpec::linear(120, 84),
                ReLU,
                LayerSpec::linear(84, 10),
            ],
        }
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist_cnn" => Ok(Arch::MnistCnn),
            "cifar10_cnn" => Ok(Arch::Cifar10Cnn),
            other => Err(Error::config(format!("unknown model identifier '{other}'"))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::MnistCnn => "mnist_cnn",
            Arch::Cifar10Cnn => "cifar10_cnn",
        })
    }
}

pub fn build_model<R: Rng + ?Sized>(arch: Arch, rng: &mut R) -> Result<Network<f32>> {
    Network::new(arch.input_shape(), arch.layers(), rng)
}
