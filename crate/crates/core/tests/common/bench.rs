//! Shared benchmark configurations for the long-running suites.

use feddpc_core::{
    synth_classification, ClientConfig, Dataset, ModelSpec, PartitionSpec, RunConfig, Strategy,
};

/// Step-size grid, one decade apart.
pub const LR_GRID: [f64; 5] = [1.0, 0.1, 0.01, 0.001, 0.0001];
pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// 50-feature, 10-class blobs; centralized logistic regression reaches
/// about 91% test accuracy at this separation.
pub const N_FEATURES: usize = 50;
pub const CLASS_SEP: f64 = 0.48;

pub fn blobs(seed: u64, n_features: usize, class_sep: f64) -> (Dataset, Dataset) {
    let all = synth_classification(6000, n_features, 10, class_sep, seed).unwrap();
    all.split_at(5000).unwrap()
}

/// 100 clients, Dir(0.2), 10% participation; `lr` on both sides.
pub fn federated(strategy: Strategy, lr: f64, seed: u64, n_features: usize, rounds: usize) -> RunConfig {
    RunConfig {
        participation_rate: 0.1,
        rounds,
        strategy,
        client: ClientConfig {
            local_lr: lr,
            batch_size: 32,
            local_epochs: 1,
        },
        server_lr: lr,
        model: ModelSpec::logreg(n_features, 10, seed),
        partition: PartitionSpec {
            k: 100,
            alpha: 0.2,
            seed,
        },
        run_seed: seed,
        eval_every: 1,
    }
}
