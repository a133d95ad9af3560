//! Local training on one client for one round.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, ClientDataset, Dataset};
use crate::error::{Error, Result};
use crate::model::{loss_and_grad, ModelSpec};
use crate::rng::{stream, Purpose};
use crate::vecmath::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub local_lr: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            local_lr: 0.1,
            batch_size: 32,
            local_epochs: 1,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.local_lr > 0.0 && self.local_lr.is_finite()) {
            return Err(Error::invalid(format!("local_lr must be positive, got {}", self.local_lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::invalid("local_epochs must be at least 1"));
        }
        Ok(())
    }
}

/// What a client sends back after a round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub client_id: usize,
    /// `(w_global - w_local) / local_lr`
    pub delta: ParamVector,
    pub n_samples: usize,
    /// Mean of the pre-step minibatch losses.
    pub train_loss: f64,
}

/// Runs `local_epochs` passes of minibatch SGD starting from `global_params`.
///
/// Samples are reshuffled each epoch from a stream keyed by
/// `(round_seed, client_id)`; the last minibatch of an epoch may be short.
pub fn local_train(
    spec: &ModelSpec,
    global_params: &ParamVector,
    train: &Dataset,
    data: &ClientDataset,
    cfg: &ClientConfig,
    round_seed: u64,
) -> Result<LocalUpdate> {
    train_inner(spec, global_params, train, data, cfg, round_seed, None)
}

/// Like [`local_train`], also returning every applied minibatch gradient.
pub fn local_train_traced(
    spec: &ModelSpec,
    global_params: &ParamVector,
    train: &Dataset,
    data: &ClientDataset,
    cfg: &ClientConfig,
    round_seed: u64,
) -> Result<(LocalUpdate, Vec<ParamVector>)> {
    let mut grads = Vec::new();
    let update = train_inner(spec, global_params, train, data, cfg, round_seed, Some(&mut grads))?;
    Ok((update, grads))
}

fn train_inner(
    spec: &ModelSpec,
    global_params: &ParamVector,
    train: &Dataset,
    data: &ClientDataset,
    cfg: &ClientConfig,
    round_seed: u64,
    mut trace: Option<&mut Vec<ParamVector>>,
) -> Result<LocalUpdate> {
    let id = data.client_id;
    cfg.validate().map_err(|e| e.in_client(id))?;
    if data.is_empty() {
        return Err(Error::EmptyClient(id));
    }

    let mut rng = stream(round_seed, Purpose::Shuffle, id as u64, 0);
    let mut order = data.sample_indices.clone();
    let mut params = global_params.clone();
    let mut loss_sum = 0.0;
    let mut steps = 0usize;

    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grad) =
                loss_and_grad(spec, &params, Batch::of(train, chunk)).map_err(|e| e.in_client(id))?;
            params = params
                .sub_scaled(cfg.local_lr, &grad)
                .map_err(|e| e.in_client(id))?;
            loss_sum += loss;
            steps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(grad);
            }
        }
    }

    let delta = global_params
        .sub(&params)
        .and_then(|d| d.scaled(1.0 / cfg.local_lr))
        .map_err(|e| e.in_client(id))?;

    Ok(LocalUpdate {
        client_id: id,
        delta,
        n_samples: data.len(),
        train_loss: loss_sum / steps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_classification;
    use crate::model::init_params;

    fn setup() -> (ModelSpec, Dataset, ParamVector) {
        let data = synth_classification(60, 3, 3, 1.5, 7).unwrap();
        let spec = ModelSpec::logreg(3, 3, 1);
        let params = init_params(&spec).unwrap();
        (spec, data, params)
    }

    fn client(id: usize, idx: Vec<usize>) -> ClientDataset {
        ClientDataset {
            client_id: id,
            sample_indices: idx,
        }
    }

    #[test]
    fn single_step_delta_is_gradient() {
        let (spec, data, w0) = setup();
        let cfg = ClientConfig {
            local_lr: 0.5,
            batch_size: 8,
            local_epochs: 1,
        };
        let u = local_train(&spec, &w0, &data, &client(3, vec![4]), &cfg, 0).unwrap();
        let (loss, g) = loss_and_grad(&spec, &w0, Batch::of(&data, &[4])).unwrap();
        assert_eq!(u.train_loss, loss);
        assert_eq!(u.n_samples, 1);
        for (a, b) in u.delta.iter().zip(g.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn two_full_batch_epochs_replay() {
        let (spec, data, w0) = setup();
        let idx: Vec<usize> = (0..10).collect();
        let cfg = ClientConfig {
            local_lr: 0.3,
            batch_size: 100,
            local_epochs: 2,
        };
        let u = local_train(&spec, &w0, &data, &client(0, idx.clone()), &cfg, 9).unwrap();

        let (_, g1) = loss_and_grad(&spec, &w0, Batch::of(&data, &idx)).unwrap();
        let w1 = w0.sub_scaled(0.3, &g1).unwrap();
        let (_, g2) = loss_and_grad(&spec, &w1, Batch::of(&data, &idx)).unwrap();
        let expected = g1.add(&g2).unwrap();
        for (a, b) in u.delta.iter().zip(expected.iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn delta_is_sum_of_applied_gradients() {
        let (spec, data, w0) = setup();
        let idx: Vec<usize> = (0..45).collect();
        let cfg = ClientConfig {
            local_lr: 0.05,
            batch_size: 8,
            local_epochs: 3,
        };
        let (u, grads) = local_train_traced(&spec, &w0, &data, &client(2, idx), &cfg, 17).unwrap();
        assert_eq!(grads.len(), 3 * 6);
        let mut sum = ParamVector::zeros(w0.len());
        for g in &grads {
            sum = sum.add(g).unwrap();
        }
        for (a, b) in u.delta.iter().zip(sum.iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn deterministic_per_round_seed() {
        let (spec, data, w0) = setup();
        let c = client(5, (0..30).collect());
        let cfg = ClientConfig::default();
        let a = local_train(&spec, &w0, &data, &c, &cfg, 123).unwrap();
        let b = local_train(&spec, &w0, &data, &c, &cfg, 123).unwrap();
        assert_eq!(a, b);
        let small = ClientConfig { batch_size: 4, ..cfg };
        let x = local_train(&spec, &w0, &data, &c, &small, 1).unwrap();
        let y = local_train(&spec, &w0, &data, &c, &small, 2).unwrap();
        assert_ne!(x.delta, y.delta);
    }

    #[test]
    fn contract_violations() {
        let (spec, data, w0) = setup();
        let cfg = ClientConfig::default();
        assert!(matches!(
            local_train(&spec, &w0, &data, &client(4, vec![]), &cfg, 0),
            Err(Error::EmptyClient(4))
        ));
        let zero_epochs = ClientConfig { local_epochs: 0, ..cfg };
        assert!(local_train(&spec, &w0, &data, &client(1, vec![0]), &zero_epochs, 0).is_err());
        let bad_lr = ClientConfig { local_lr: 0.0, ..cfg };
        assert!(local_train(&spec, &w0, &data, &client(1, vec![0]), &bad_lr, 0).is_err());
    }
}
