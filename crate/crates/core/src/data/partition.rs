use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    /// Number of clients.
    pub k: usize,
    /// Dirichlet concentration; smaller is more heterogeneous.
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientDataset {
    pub client_id: usize,
    /// Indices into the partitioned dataset, ascending.
    pub sample_indices: Vec<usize>,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub clients: Vec<ClientDataset>,
    /// `proportions[class][client]`, each row sums to one.
    pub proportions: Vec<Vec<f64>>,
    /// `counts[class][client]`
    pub counts: Vec<Vec<usize>>,
}

impl Partition {
    pub fn non_empty_clients(&self) -> Vec<usize> {
        self.clients
            .iter()
            .filter(|c| !c.is_empty())
            .map(|c| c.client_id)
            .collect()
    }

    pub fn empty_clients(&self) -> Vec<usize> {
        self.clients
            .iter()
            .filter(|c| c.is_empty())
            .map(|c| c.client_id)
            .collect()
    }

    /// Mean over non-empty clients of the largest single-class share.
    pub fn mean_max_class_share(&self) -> f64 {
        let k = self.clients.len();
        let mut total = 0.0;
        let mut n = 0usize;
        for j in 0..k {
            let sizes: Vec<usize> = self.counts.iter().map(|row| row[j]).collect();
            let sum: usize = sizes.iter().sum();
            if sum > 0 {
                total += *sizes.iter().max().unwrap() as f64 / sum as f64;
                n += 1;
            }
        }
        total / n.max(1) as f64
    }
}

fn sample_dirichlet<R: Rng>(rng: &mut R, k: usize, alpha: f64) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::invalid(format!("dirichlet alpha {alpha}: {e}")))?;
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        Ok(draws.into_iter().map(|g| g / sum).collect())
    } else {
        // every draw underflowed; the limit of Dir(alpha) as alpha -> 0 is a
        // uniformly chosen vertex of the simplex
        let mut p = vec![0.0; k];
        p[rng.random_range(0..k)] = 1.0;
        Ok(p)
    }
}

/// Floor of each share plus largest-remainder rounding, so every count is
/// within one sample of `p * n` and the counts sum to `n`.
fn apportion(props: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut leftover = n.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..props.len()).collect();
    // stable sort keeps the lowest client id first among equal remainders
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa)
    });
    for &j in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[j] += 1;
        leftover -= 1;
    }
    counts
}

/// Splits `data` over `spec.k` clients with per-class Dirichlet shares.
///
/// For each class, the class's samples are shuffled, a share vector
/// `P ~ Dir_k(alpha)` is drawn, and consecutive blocks of the shuffled
/// samples go to clients `0..k` with sizes apportioned from `P`.
pub fn dirichlet_partition(data: &Dataset, spec: &PartitionSpec) -> Result<Partition> {
    if spec.k == 0 {
        return Err(Error::invalid("partition needs at least one client"));
    }
    if !(spec.alpha > 0.0 && spec.alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {}", spec.alpha)));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes()];
    for (i, &l) in data.labels().iter().enumerate() {
        by_class[l].push(i);
    }

    let mut rng = stream(spec.seed, Purpose::Partition, 0, 0);
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); spec.k];
    let mut proportions = Vec::with_capacity(data.n_classes());
    let mut counts = Vec::with_capacity(data.n_classes());

    for mut members in by_class {
        members.shuffle(&mut rng);
        let props = sample_dirichlet(&mut rng, spec.k, spec.alpha)?;
        let class_counts = apportion(&props, members.len());
        let mut start = 0;
        for (j, &c) in class_counts.iter().enumerate() {
            assigned[j].extend_from_slice(&members[start..start + c]);
            start += c;
        }
        debug_assert_eq!(start, members.len());
        proportions.push(props);
        counts.push(class_counts);
    }

    let clients = assigned
        .into_iter()
        .enumerate()
        .map(|(client_id, mut sample_indices)| {
            sample_indices.sort_unstable();
            ClientDataset {
                client_id,
                sample_indices,
            }
        })
        .collect();

    Ok(Partition {
        clients,
        proportions,
        counts,
    })
}
