//! Deterministic single-process simulation of federated learning with
//! partial client participation.
//!
//! The server-side strategy family implemented here modifies each local
//! update by removing its component along the previous global update and
//! then rescales the residual by `lambda + |Δ| / |residual|` before
//! averaging. Two ablations (no rescaling; neither step) share the same code
//! path with individual steps switched off.

pub mod client;
pub mod data;
pub mod error;
pub mod model;
pub mod orchestrator;
pub mod report;
pub mod rng;
pub mod server;
pub mod vecmath;

pub use client::{local_train, ClientConfig, LocalUpdate};
pub use data::{dirichlet_partition, load_idx, synth_classification, ClientDataset, Dataset, Partition, PartitionSpec};
pub use error::{Error, Result};
pub use model::{evaluate, init_params, loss_and_grad, LossReport, ModelKind, ModelSpec};
pub use orchestrator::{grid_search, run, run_with, sample_participants, RoundMetrics, RunConfig, RunResult, Simulation};
pub use server::{aggregate, transform_update, Pipeline, ServerState, Strategy, StrategyKind, UpdateRule};
pub use vecmath::{ParamVector, DEFAULT_EPS};
