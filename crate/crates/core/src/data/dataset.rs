use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Images with class labels. Pixels are `f32` in `[0, 1]`, stored as one
/// `[count, C, H, W]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Tensor<f32>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::shape(format!(
                "dataset images must be [count, C, H, W], got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::shape(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::contract(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Per-sample shape `[C, H, W]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.images.data()[i * n..(i + 1) * n]
    }

    /// Copies the listed samples into a batch tensor plus labels.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        (Tensor::new(shape, data).expect("gathered length matches shape"), labels)
    }

    /// Class counts over `indices`, or over the whole set when `None`.
    pub fn histogram(&self, indices: Option<&[usize]>) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        match indices {
            Some(idx) => idx.iter().for_each(|&i| h[self.labels[i]] += 1),
            None => self.labels.iter().for_each(|&l| h[l] += 1),
        }
        h
    }

    /// A new dataset holding only the listed samples, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let (images, labels) = self.gather(indices);
        Self {
            images,
            labels,
            num_classes: self.num_classes,
        }
    }
}

/// A client's private slice of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientShard {
    pub client: usize,
    pub indices: Vec<usize>,
}

impl ClientShard {
    /// Sample count `n_c`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}
