use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Isotropic Gaussian blobs, one per class.
///
/// Class `c` has mean `class_sep * z_c` with `z_c ~ N(0, I)` and unit
/// variance around it. Labels cycle through the classes before a seeded
/// shuffle, so per-class counts differ by at most one.
pub fn synth_classification(
    n_samples: usize,
    n_features: usize,
    n_classes: usize,
    class_sep: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes < 2 || n_samples < n_classes {
        return Err(Error::invalid(format!(
            "need n_samples >= n_classes >= 2 (got {n_samples} samples, {n_classes} classes)"
        )));
    }
    if n_features == 0 {
        return Err(Error::invalid("n_features must be at least 1"));
    }
    if !(class_sep > 0.0 && class_sep.is_finite()) {
        return Err(Error::invalid(format!("class_sep must be positive, got {class_sep}")));
    }

    let mut mean_rng = stream(seed, Purpose::Synthetic, 0, 0);
    let means: Vec<f64> = (0..n_classes * n_features)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut mean_rng);
            class_sep * z
        })
        .collect();

    let mut labels: Vec<usize> = (0..n_samples).map(|i| i % n_classes).collect();
    labels.shuffle(&mut stream(seed, Purpose::Synthetic, 1, 0));

    let mut noise_rng = stream(seed, Purpose::Synthetic, 2, 0);
    let mut features = Vec::with_capacity(n_samples * n_features);
    for &label in &labels {
        let mean = &means[label * n_features..(label + 1) * n_features];
        features.extend(mean.iter().map(|m| {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            m + z
        }));
    }

    Dataset::new(features, labels, n_features, n_classes)
}
