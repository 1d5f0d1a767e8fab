use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::vector::Matrix;

/// Labeled sequence of embeddings, one row per sample, in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    features: Matrix,
    labels: Vec<usize>,
}

impl Stream {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        check_dim(features.rows(), labels.len())?;
        Ok(Stream { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], usize)> + '_ {
        self.features.iter_rows().zip(self.labels.iter().copied())
    }

    /// Errors if any label is outside `0..class_count`.
    pub fn check_labels(&self, class_count: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l >= class_count) {
            Some(i) => Err(Error::validation(format!(
                "sample {i} has label {} but only {class_count} classes exist",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }

    /// The first `n` samples (or all of them, if fewer).
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let features = Matrix::from_rows(self.dim(), self.features.iter_rows().take(n))
            .expect("rows share the stream dimension");
        Stream {
            features,
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Same multiset of samples in the given order.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        check_dim(self.len(), order.len())?;
        if let Some(&bad) = order.iter().find(|&&i| i >= self.len()) {
            return Err(Error::validation(format!(
                "order refers to sample {bad} of a {}-sample stream",
                self.len()
            )));
        }
        let features = Matrix::from_rows(self.dim(), order.iter().map(|&i| self.features.row(i)))?;
        let labels = order.iter().map(|&i| self.labels[i]).collect();
        Ok(Stream { features, labels })
    }

    /// Seeded uniform permutation (ChaCha8).
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        self.reordered(&order).expect("permutation has stream length")
    }
}
