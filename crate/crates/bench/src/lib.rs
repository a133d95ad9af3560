//! Random server-round instances for benchmarks.

use feddpc_core::rng::{stream, Purpose};
use feddpc_core::{LocalUpdate, ParamVector, ServerState};
use rand::Rng;

pub fn random_vector(d: usize, seed: u64, index: u64) -> ParamVector {
    let mut rng = stream(seed, Purpose::Synthetic, index, d as u64);
    ParamVector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("finite")
}

/// Server state with a non-zero previous update and `k` client updates of
/// dimension `d`.
pub fn round_instance(k: usize, d: usize, seed: u64) -> (ServerState, Vec<LocalUpdate>) {
    let state = ServerState {
        global_params: random_vector(d, seed, 0),
        prev_global_update: random_vector(d, seed, 1),
        round: 2,
        server_lr: 0.1,
    };
    let updates = (0..k)
        .map(|j| LocalUpdate {
            client_id: j,
            delta: random_vector(d, seed, 2 + j as u64),
            n_samples: 1,
            train_loss: 0.0,
        })
        .collect();
    (state, updates)
}
