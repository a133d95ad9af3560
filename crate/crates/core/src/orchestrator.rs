//! The round loop: sample participants, train them, aggregate, evaluate.

use std::time::Instant;

use rand::seq::index;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{local_train, ClientConfig, LocalUpdate};
use crate::data::{dirichlet_partition, Dataset, Partition, PartitionSpec};
use crate::error::{Error, Result};
use crate::model::{evaluate, init_params, ModelSpec};
use crate::rng::{stream, Purpose};
use crate::server::{aggregate_traced, ServerState, Strategy, UpdateRule};
use crate::vecmath::ParamVector;

/// Environment variable overriding the client worker-pool size.
pub const WORKERS_ENV: &str = "FEDDPC_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub participation_rate: f64,
    pub rounds: usize,
    pub strategy: Strategy,
    pub client: ClientConfig,
    pub server_lr: f64,
    pub model: ModelSpec,
    pub partition: PartitionSpec,
    pub run_seed: u64,
    pub eval_every: usize,
}

impl RunConfig {
    pub fn clients(&self) -> usize {
        self.partition.k
    }

    pub fn participants_per_round(&self) -> usize {
        participant_count(self.partition.k, self.participation_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.participation_rate > 0.0 && self.participation_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "participation_rate must lie in (0, 1], got {}",
                self.participation_rate
            )));
        }
        if self.participants_per_round() == 0 {
            return Err(Error::invalid(format!(
                "participation_rate {} of {} clients selects nobody",
                self.participation_rate, self.partition.k
            )));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be at least 1"));
        }
        if !(self.server_lr > 0.0 && self.server_lr.is_finite()) {
            return Err(Error::invalid(format!("server_lr must be positive, got {}", self.server_lr)));
        }
        self.strategy.validate()?;
        self.client.validate()?;
        self.model.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub avg_train_loss: f64,
    /// `None` on rounds skipped by `eval_every`.
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub participants: Vec<usize>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub per_round: Vec<RoundMetrics>,
    pub best_accuracy: f64,
    /// Earliest round reaching `best_accuracy`.
    pub best_round: usize,
    pub final_params: ParamVector,
    /// Clients left without samples by the partition; never sampled.
    pub empty_clients: Vec<usize>,
}

impl RunResult {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.per_round.last().and_then(|m| m.test_accuracy)
    }

    pub fn mean_round_wall_ms(&self) -> f64 {
        self.per_round.iter().map(|m| m.wall_ms).sum::<f64>() / self.per_round.len().max(1) as f64
    }
}

/// Everything observed during one round.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    pub metrics: RoundMetrics,
    pub updates: Vec<LocalUpdate>,
    pub transformed: Vec<(usize, ParamVector)>,
    /// `Δ_{t-1}`, the projection target used this round.
    pub prev_global_update: ParamVector,
    /// `Δ_t`
    pub global_update: ParamVector,
}

fn participant_count(k: usize, rate: f64) -> usize {
    // tolerate representation error such as 0.1 * 30 = 3.0000000000000004
    ((rate * k as f64) + 1e-9).floor().min(k as f64) as usize
}

/// Uniform sample without replacement of `floor(rate * k)` ids from
/// `0..k`, sorted ascending.
pub fn sample_participants(k: usize, rate: f64, round: usize, run_seed: u64) -> Vec<usize> {
    let all: Vec<usize> = (0..k).collect();
    sample_from(&all, k, rate, round, run_seed)
}

/// As [`sample_participants`], restricted to `eligible` clients. When fewer
/// clients are eligible than requested, all of them participate.
pub fn sample_from(eligible: &[usize], k: usize, rate: f64, round: usize, run_seed: u64) -> Vec<usize> {
    let want = participant_count(k, rate).min(eligible.len());
    let mut rng = stream(run_seed, Purpose::Sampling, round as u64, 0);
    let mut picked: Vec<usize> = index::sample(&mut rng, eligible.len(), want)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Seed handed to every client's local training in `round`.
pub fn round_seed(run_seed: u64, round: usize) -> u64 {
    stream(run_seed, Purpose::Shuffle, round as u64, u64::MAX).next_u64()
}

pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Stepwise driver for one simulation.
pub struct Simulation<'a, R: UpdateRule> {
    cfg: &'a RunConfig,
    rule: &'a R,
    train: &'a Dataset,
    test: &'a Dataset,
    partition: Partition,
    eligible: Vec<usize>,
    state: ServerState,
    pool: rayon::ThreadPool,
}

impl<'a, R: UpdateRule> Simulation<'a, R> {
    pub fn new(
        cfg: &'a RunConfig,
        rule: &'a R,
        train: &'a Dataset,
        test: &'a Dataset,
        workers: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        for (name, ds) in [("train", train), ("test", test)] {
            if ds.n_features() != cfg.model.n_features {
                return Err(Error::invalid(format!(
                    "{name} set has {} features, model expects {}",
                    ds.n_features(),
                    cfg.model.n_features
                )));
            }
            if ds.n_classes() > cfg.model.n_classes {
                return Err(Error::invalid(format!(
                    "{name} set has {} classes, model has {}",
                    ds.n_classes(),
                    cfg.model.n_classes
                )));
            }
        }
        let partition = dirichlet_partition(train, &cfg.partition)?;
        let eligible = partition.non_empty_clients();
        let empty = partition.empty_clients();
        if !empty.is_empty() {
            log::warn!("{} clients received no samples and are excluded: {:?}", empty.len(), empty);
        }
        let state = ServerState::new(init_params(&cfg.model)?, cfg.server_lr)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        Ok(Self {
            cfg,
            rule,
            train,
            test,
            partition,
            eligible,
            state,
            pool,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn state(&self) -> &ServerState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.round >= self.cfg.rounds
    }

    pub fn step(&mut self) -> Result<RoundTrace> {
        let round = self.state.round + 1;
        self.step_inner(round).map_err(|e| e.in_round(round))
    }

    fn step_inner(&mut self, round: usize) -> Result<RoundTrace> {
        let started = Instant::now();
        let cfg = self.cfg;
        let participants = sample_from(
            &self.eligible,
            cfg.clients(),
            cfg.participation_rate,
            round,
            cfg.run_seed,
        );
        if participants.is_empty() {
            return Err(Error::NoUpdates);
        }
        let seed = round_seed(cfg.run_seed, round);
        let global = &self.state.global_params;
        let (train, clients) = (self.train, &self.partition.clients);
        let updates: Vec<LocalUpdate> = self.pool.install(|| {
            participants
                .par_iter()
                .map(|&id| local_train(&cfg.model, global, train, &clients[id], &cfg.client, seed))
                .collect::<Result<Vec<_>>>()
        })?;

        let prev_global_update = self.state.prev_global_update.clone();
        let trace = aggregate_traced(self.rule, &updates, &self.state)?;
        self.state = trace.state;

        let avg_train_loss = updates.iter().map(|u| u.train_loss).sum::<f64>() / updates.len() as f64;
        let (test_loss, test_accuracy) = if round.is_multiple_of(cfg.eval_every) || round == cfg.rounds {
            let r = evaluate(&cfg.model, &self.state.global_params, self.test)?;
            (Some(r.loss), Some(r.accuracy))
        } else {
            (None, None)
        };

        Ok(RoundTrace {
            metrics: RoundMetrics {
                round,
                avg_train_loss,
                test_loss,
                test_accuracy,
                participants,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            },
            updates,
            transformed: trace.transformed,
            prev_global_update,
            global_update: self.state.prev_global_update.clone(),
        })
    }

    pub fn finish(self, per_round: Vec<RoundMetrics>) -> Result<RunResult> {
        let (best_accuracy, best_round) = best_of(&per_round)
            .ok_or_else(|| Error::invalid("run finished without any evaluated round"))?;
        Ok(RunResult {
            per_round,
            best_accuracy,
            best_round,
            final_params: self.state.global_params,
            empty_clients: self.partition.empty_clients(),
        })
    }
}

/// Highest test accuracy and the earliest round reaching it.
pub fn best_of(per_round: &[RoundMetrics]) -> Option<(f64, usize)> {
    per_round
        .iter()
        .filter_map(|m| m.test_accuracy.map(|a| (a, m.round)))
        .fold(None, |best, (a, r)| match best {
            Some((b, _)) if a <= b => best,
            _ => Some((a, r)),
        })
}

pub fn run(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<RunResult> {
    run_with(cfg, &cfg.strategy, train, test, default_workers())
}

/// Runs all rounds with an explicit update rule and worker count.
pub fn run_with(
    cfg: &RunConfig,
    rule: &impl UpdateRule,
    train: &Dataset,
    test: &Dataset,
    workers: usize,
) -> Result<RunResult> {
    let mut sim = Simulation::new(cfg, rule, train, test, workers)?;
    let mut per_round = Vec::with_capacity(cfg.rounds);
    while !sim.is_done() {
        per_round.push(sim.step()?.metrics);
    }
    let result = sim.finish(per_round)?;
    debug_assert_eq!(
        best_of(&result.per_round),
        Some((result.best_accuracy, result.best_round))
    );
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub lambda: f64,
    pub lr: f64,
    /// `(best_accuracy, best_round)`, or the error message of a failed cell.
    pub outcome: std::result::Result<(f64, usize), String>,
}

impl GridRow {
    pub fn best_accuracy(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|o| o.0)
    }
}

/// One run per `(lambda, lr)` cell from the same seeds and initial model,
/// best first. `lr` is a single step size used on both sides: it sets the
/// client learning rate and the server learning rate. Failed cells are kept
/// and sorted last.
pub fn grid_search(
    base: &RunConfig,
    lambdas: &[f64],
    lrs: &[f64],
    train: &Dataset,
    test: &Dataset,
    workers: usize,
) -> Result<Vec<GridRow>> {
    if lambdas.is_empty() || lrs.is_empty() {
        return Err(Error::invalid("grid search needs non-empty lambda and lr grids"));
    }
    let mut rows = Vec::with_capacity(lambdas.len() * lrs.len());
    for &lambda in lambdas {
        for &lr in lrs {
            let mut cfg = base.clone();
            cfg.strategy.lambda = lambda;
            cfg.client.local_lr = lr;
            cfg.server_lr = lr;
            let outcome = run_with(&cfg, &cfg.strategy, train, test, workers)
                .map(|r| (r.best_accuracy, r.best_round))
                .map_err(|e| {
                    log::warn!("grid cell lambda={lambda} lr={lr} failed: {e}");
                    e.to_string()
                });
            rows.push(GridRow { lambda, lr, outcome });
        }
    }
    // stable: ties keep grid order
    rows.sort_by(|a, b| match (a.best_accuracy(), b.best_accuracy()) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}
