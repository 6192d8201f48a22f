use rand::seq::index;
use rand::Rng;

use crate::nn::{Network, Scalar};

/// Binary keep-mask over the prunable weight tensors of a network, one
/// layer per conv/linear weight in parameter order. Biases are implicitly
/// always kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    layers: Vec<Vec<bool>>,
}

impl Mask {
    pub fn from_layers(layers: Vec<Vec<bool>>) -> Self {
        Self { layers }
    }

    /// All-ones mask for `net`.
    pub fn dense_for<T: Scalar>(net: &Network<T>) -> Self {
        Self {
            layers: net
                .prunable_params()
                .into_iter()
                .map(|p| vec![true; net.params()[p].len()])
                .collect(),
        }
    }

    /// Uniformly random mask with exactly `retained[l]` ones in layer `l`.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], retained: &[usize], rng: &mut R) -> Self {
        let layers = sizes
            .iter()
            .zip(retained)
            .map(|(&n, &k)| {
                let mut keep = vec![false; n];
                for i in index::sample(rng, n, k.min(n)) {
                    keep[i] = true;
                }
                keep
            })
            .collect();
        Self { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> &[bool] {
        &self.layers[i]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut [bool] {
        &mut self.layers[i]
    }

    pub fn layers(&self) -> &[Vec<bool>] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    /// Total number of prunable positions.
    pub fn len(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nnz_per_layer(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(|l| l.iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.nnz_per_layer().iter().sum()
    }

    /// Retained fraction of prunable positions.
    pub fn density(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        self.nnz() as f64 / self.len() as f64
    }

    /// Number of positions where the two masks differ.
    pub fn hamming(&self, other: &Mask) -> usize {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
            .sum()
    }

    /// Zeroes masked-out weights of `net`.
    pub fn apply<T: Scalar>(&self, net: &mut Network<T>) {
        for (l, p) in net.prunable_params().into_iter().enumerate() {
            let keep = &self.layers[l];
            for (w, &k) in net.params_mut()[p].data_mut().iter_mut().zip(keep) {
                if !k {
                    *w = T::zero();
                }
            }
        }
    }

    /// Whether `θ ⊙ (1 − m) = 0` holds for `net`.
    pub fn is_satisfied_by<T: Scalar>(&self, net: &Network<T>) -> bool {
        net.prunable_params()
            .into_iter()
            .enumerate()
            .all(|(l, p)| {
                net.params()[p]
                    .data()
                    .iter()
                    .zip(&self.layers[l])
                    .all(|(w, &k)| k || *w == T::zero())
            })
    }

    pub fn matches_network<T: Scalar>(&self, net: &Network<T>) -> bool {
        let prunable = net.prunable_params();
        prunable.len() == self.layers.len()
            && prunable
                .iter()
                .zip(&self.layers)
                .all(|(&p, l)| net.params()[p].len() == l.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn random_mask_has_exact_counts() {
        let mut rng = stream_rng(1, Stream::InitialMask, 0, 0);
        let m = Mask::random(&[10, 100, 7], &[3, 20, 7], &mut rng);
        assert_eq!(m.nnz_per_layer(), vec![3, 20, 7]);
        assert_eq!(m.len(), 117);
        assert!((m.density() - 30.0 / 117.0).abs() < 1e-15);
    }

    #[test]
    fn hamming_counts_differences() {
        let a = Mask::from_layers(vec![vec![true, false, true], vec![false]]);
        let b = Mask::from_layers(vec![vec![true, true, false], vec![false]]);
        assert_eq!(a.hamming(&b), 2);
        assert_eq!(a.hamming(&a), 0);
    }
}
