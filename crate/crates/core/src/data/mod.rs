//! Labeled classification datasets and their heterogeneous split across
//! clients.

mod idx;
mod partition;
mod synth;

pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx};
pub use partition::{dirichlet_partition, ClientDataset, Partition, PartitionSpec};
pub use synth::synth_classification;

use crate::error::{Error, Result};

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if n_features == 0 || n_classes == 0 {
            return Err(Error::invalid("n_features and n_classes must be positive"));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::invalid(format!(
                "feature matrix has {} values, expected {} samples x {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Copies the given samples, in order, into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_samples() {
                return Err(Error::invalid(format!("sample index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.n_features, self.n_classes)
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Self, Self)> {
        if n == 0 || n >= self.n_samples() {
            return Err(Error::invalid(format!(
                "split point {n} must lie strictly inside 0..{}",
                self.n_samples()
            )));
        }
        let (fa, fb) = self.features.split_at(n * self.n_features);
        let (la, lb) = self.labels.split_at(n);
        Ok((
            Self::new(fa.to_vec(), la.to_vec(), self.n_features, self.n_classes)?,
            Self::new(fb.to_vec(), lb.to_vec(), self.n_features, self.n_classes)?,
        ))
    }
}

/// A view of selected samples of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    data: &'a Dataset,
    indices: Option<&'a [usize]>,
}

impl<'a> Batch<'a> {
    pub fn all(data: &'a Dataset) -> Self {
        Self {
            data,
            indices: None,
        }
    }

    pub fn of(data: &'a Dataset, indices: &'a [usize]) -> Self {
        Self {
            data,
            indices: Some(indices),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.map_or(self.data.n_samples(), <[usize]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.data.n_features
    }

    pub fn sample(&self, i: usize) -> (&'a [f64], usize) {
        let j = self.indices.map_or(i, |idx| idx[i]);
        (self.data.row(j), self.data.labels[j])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [f64], usize)> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }
}
