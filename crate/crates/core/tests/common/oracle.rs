//! Brute-force reference implementations for tests.
//!
//! Nothing here calls into the crate's vector or server arithmetic; vectors
//! are handled as plain slices with explicit loops.
#![allow(clippy::needless_range_loop, clippy::manual_memcpy)]

use feddpc_core::data::Batch;
use feddpc_core::model::{loss, ModelSpec};
use feddpc_core::{LocalUpdate, ParamVector, ServerState, Strategy, StrategyKind};

/// Reference server round with the same contract as `server::aggregate`.
pub fn naive_round(strategy: &Strategy, updates: &[LocalUpdate], state: &ServerState) -> ServerState {
    assert!(!updates.is_empty(), "no updates");
    let d = state.global_params.len();
    let prev = state.prev_global_update.as_slice();

    let mut prev_sq = 0.0;
    for i in 0..d {
        prev_sq += prev[i] * prev[i];
    }
    let prev_degenerate = prev_sq.sqrt() <= strategy.eps;

    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by_key(|&j| updates[j].client_id);

    let mut sum = vec![0.0; d];
    for j in order {
        let u = updates[j].delta.as_slice();
        assert_eq!(u.len(), d);
        let mut out = vec![0.0; d];
        match strategy.kind {
            StrategyKind::FedAvgTwoSided => {
                for i in 0..d {
                    out[i] = u[i];
                }
            }
            StrategyKind::FedDpcNoScale | StrategyKind::FedDpc => {
                let mut coef = 0.0;
                if !prev_degenerate {
                    let mut num = 0.0;
                    for i in 0..d {
                        num += u[i] * prev[i];
                    }
                    coef = num / prev_sq;
                }
                for i in 0..d {
                    out[i] = u[i] - coef * prev[i];
                }
                if strategy.kind == StrategyKind::FedDpc {
                    let mut u_sq = 0.0;
                    let mut r_sq = 0.0;
                    for i in 0..d {
                        u_sq += u[i] * u[i];
                        r_sq += out[i] * out[i];
                    }
                    let factor = if r_sq.sqrt() <= strategy.eps {
                        0.0
                    } else {
                        strategy.lambda + u_sq.sqrt() / r_sq.sqrt()
                    };
                    for i in 0..d {
                        out[i] *= factor;
                    }
                }
            }
        }
        for i in 0..d {
            sum[i] += out[i];
        }
    }

    let n = updates.len() as f64;
    let w = state.global_params.as_slice();
    let mut global_update = vec![0.0; d];
    let mut params = vec![0.0; d];
    for i in 0..d {
        global_update[i] = sum[i] / n;
        params[i] = w[i] - state.server_lr * global_update[i];
    }
    ServerState {
        global_params: ParamVector::new(params).unwrap(),
        prev_global_update: ParamVector::new(global_update).unwrap(),
        round: state.round + 1,
        server_lr: state.server_lr,
    }
}

/// Central differences of an arbitrary scalar function.
pub fn fd_grad_fn(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0);
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference gradient of the model's mean loss on `batch`.
pub fn fd_grad(spec: &ModelSpec, params: &ParamVector, batch: Batch<'_>, h: f64) -> Vec<f64> {
    fd_grad_fn(
        |w| loss(spec, &ParamVector::new(w.to_vec()).unwrap(), batch).unwrap(),
        params.as_slice(),
        h,
    )
}

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)`
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
