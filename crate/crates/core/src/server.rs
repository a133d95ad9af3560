//! Server-side aggregation.
//!
//! Every participating update is first transformed against the previous
//! global update, then the transformed updates are averaged (unweighted)
//! into the new global update `Δ_t`, and the global model moves by
//! `-server_lr · Δ_t`.
//!
//! The three strategies are points in one two-flag [`Pipeline`]:
//!
//! | strategy           | projection   | scaling  |
//! |--------------------|--------------|----------|
//! | `feddpc`           | orthogonal   | adaptive |
//! | `feddpc_noscale`   | orthogonal   | identity |
//! | `fedavg_two_sided` | (none)       | identity |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::client::LocalUpdate;
use crate::error::{Error, Result};
use crate::vecmath::{adaptive_scale, residual, ParamVector, DEFAULT_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "feddpc")]
    FedDpc,
    #[serde(rename = "feddpc_noscale")]
    FedDpcNoScale,
    #[serde(rename = "fedavg_two_sided")]
    FedAvgTwoSided,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::FedDpc => "feddpc",
            StrategyKind::FedDpcNoScale => "feddpc_noscale",
            StrategyKind::FedAvgTwoSided => "fedavg_two_sided",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Offset added to the cosecant scale; only `feddpc` reads it.
    pub lambda: f64,
    pub eps: f64,
}

impl Default for Strategy {
    fn default() -> Self {
        Self::feddpc(1.0)
    }
}

impl Strategy {
    pub fn feddpc(lambda: f64) -> Self {
        Self {
            kind: StrategyKind::FedDpc,
            lambda,
            eps: DEFAULT_EPS,
        }
    }

    pub fn feddpc_noscale() -> Self {
        Self {
            kind: StrategyKind::FedDpcNoScale,
            ..Self::default()
        }
    }

    pub fn fedavg_two_sided() -> Self {
        Self {
            kind: StrategyKind::FedAvgTwoSided,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectionStep {
    /// Subtract the orthogonal projection onto the previous global update.
    Orthogonal,
    /// Subtract the zero vector.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingStep {
    Adaptive { lambda: f64 },
    Identity,
}

/// The projection-then-scaling update path with each step switchable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pipeline {
    pub projection: ProjectionStep,
    pub scaling: ScalingStep,
    pub eps: f64,
}

impl Pipeline {
    pub fn apply(&self, delta: &ParamVector, prev_global_update: &ParamVector) -> Result<ParamVector> {
        let resid = match self.projection {
            ProjectionStep::Orthogonal => residual(delta, prev_global_update, self.eps)?,
            ProjectionStep::Zero => delta.sub(&ParamVector::zeros(prev_global_update.len()))?,
        };
        match self.scaling {
            ScalingStep::Adaptive { lambda } => adaptive_scale(delta, &resid, lambda, self.eps),
            ScalingStep::Identity => Ok(resid),
        }
    }
}

/// Maps a client's raw update to the vector that enters the average.
pub trait UpdateRule: Sync {
    fn transform(&self, delta: &ParamVector, prev_global_update: &ParamVector) -> Result<ParamVector>;
}

impl UpdateRule for Pipeline {
    fn transform(&self, delta: &ParamVector, prev_global_update: &ParamVector) -> Result<ParamVector> {
        self.apply(delta, prev_global_update)
    }
}

impl UpdateRule for Strategy {
    fn transform(&self, delta: &ParamVector, prev_global_update: &ParamVector) -> Result<ParamVector> {
        let pipeline = |scaling| Pipeline {
            projection: ProjectionStep::Orthogonal,
            scaling,
            eps: self.eps,
        };
        match self.kind {
            StrategyKind::FedAvgTwoSided => {
                if delta.len() != prev_global_update.len() {
                    return Err(Error::DimensionMismatch {
                        left: delta.len(),
                        right: prev_global_update.len(),
                    });
                }
                Ok(delta.clone())
            }
            StrategyKind::FedDpcNoScale => pipeline(ScalingStep::Identity).apply(delta, prev_global_update),
            StrategyKind::FedDpc => {
                pipeline(ScalingStep::Adaptive { lambda: self.lambda }).apply(delta, prev_global_update)
            }
        }
    }
}

pub fn transform_update(
    strategy: &Strategy,
    update: &LocalUpdate,
    prev_global_update: &ParamVector,
) -> Result<ParamVector> {
    strategy
        .transform(&update.delta, prev_global_update)
        .map_err(|e| e.in_client(update.client_id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub global_params: ParamVector,
    /// `Δ_{t-1}`: the averaged transformed update of the last round, before
    /// multiplication by `server_lr`. Zero before the first round.
    pub prev_global_update: ParamVector,
    pub round: usize,
    pub server_lr: f64,
}

impl ServerState {
    pub fn new(global_params: ParamVector, server_lr: f64) -> Result<Self> {
        if !(server_lr > 0.0 && server_lr.is_finite()) {
            return Err(Error::invalid(format!("server_lr must be positive, got {server_lr}")));
        }
        let d = global_params.len();
        Ok(Self {
            global_params,
            prev_global_update: ParamVector::zeros(d),
            round: 0,
            server_lr,
        })
    }

    pub fn dim(&self) -> usize {
        self.global_params.len()
    }
}

/// Result of one aggregation with the intermediate vectors kept.
#[derive(Debug, Clone)]
pub struct AggregateTrace {
    pub state: ServerState,
    /// Transformed updates, ordered by client id.
    pub transformed: Vec<(usize, ParamVector)>,
}

pub fn aggregate(rule: &impl UpdateRule, updates: &[LocalUpdate], state: &ServerState) -> Result<ServerState> {
    aggregate_traced(rule, updates, state).map(|t| t.state)
}

/// Transforms, averages, and applies one round of updates.
///
/// Updates are reduced in ascending `client_id` order regardless of input
/// order, so the result is bitwise independent of arrival order.
pub fn aggregate_traced(
    rule: &impl UpdateRule,
    updates: &[LocalUpdate],
    state: &ServerState,
) -> Result<AggregateTrace> {
    if updates.is_empty() {
        return Err(Error::NoUpdates);
    }
    let d = state.dim();
    let mut ordered: Vec<&LocalUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);

    let mut sum = vec![0.0; d];
    let mut transformed = Vec::with_capacity(ordered.len());
    for u in ordered {
        if u.delta.len() != d {
            return Err(Error::DimensionMismatch {
                left: u.delta.len(),
                right: d,
            }
            .in_client(u.client_id));
        }
        let t = rule
            .transform(&u.delta, &state.prev_global_update)
            .map_err(|e| e.in_client(u.client_id))?;
        sum.iter_mut().zip(t.iter()).for_each(|(s, v)| *s += v);
        transformed.push((u.client_id, t));
    }

    let inv = 1.0 / transformed.len() as f64;
    let global_update = ParamVector::new(sum.into_iter().map(|s| s * inv).collect())
        .map_err(|_| Error::NonFinite("global update"))?;
    let global_params = state
        .global_params
        .sub_scaled(state.server_lr, &global_update)?;

    Ok(AggregateTrace {
        state: ServerState {
            global_params,
            prev_global_update: global_update,
            round: state.round + 1,
            server_lr: state.server_lr,
        },
        transformed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::{dot, norm};

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn upd(id: usize, v: &[f64]) -> LocalUpdate {
        LocalUpdate {
            client_id: id,
            delta: pv(v),
            n_samples: 1,
            train_loss: 0.0,
        }
    }

    #[test]
    fn transform_examples() {
        let first = upd(0, &[1.5, -2.0, 0.5]);
        let zero = ParamVector::zeros(3);
        let out = transform_update(&Strategy::feddpc(1.0), &first, &zero).unwrap();
        assert_eq!(out, first.delta.scaled(2.0).unwrap());

        assert_eq!(
            transform_update(&Strategy::fedavg_two_sided(), &first, &pv(&[9.0, 9.0, 9.0])).unwrap(),
            first.delta
        );

        let out = transform_update(&Strategy::feddpc(1.0), &upd(0, &[3.0, 4.0]), &pv(&[1.0, 0.0])).unwrap();
        assert_eq!(out, pv(&[0.0, 9.0]));
        let out = transform_update(&Strategy::feddpc_noscale(), &upd(0, &[3.0, 4.0]), &pv(&[1.0, 0.0])).unwrap();
        assert_eq!(out, pv(&[0.0, 4.0]));
    }

    #[test]
    fn transform_reports_client_on_mismatch() {
        let err = transform_update(&Strategy::fedavg_two_sided(), &upd(7, &[1.0]), &pv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::Client { client: 7, .. }));
    }

    #[test]
    fn single_client_fedavg_moves_by_delta() {
        let state = ServerState::new(pv(&[1.0, 1.0]), 1.0).unwrap();
        let next = aggregate(&Strategy::fedavg_two_sided(), &[upd(0, &[0.25, -0.5])], &state).unwrap();
        assert_eq!(next.global_params, pv(&[0.75, 1.5]));
        assert_eq!(next.prev_global_update, pv(&[0.25, -0.5]));
        assert_eq!(next.round, 1);
    }

    #[test]
    fn opposite_updates_cancel() {
        let state = ServerState::new(pv(&[0.5, -0.5, 2.0]), 0.7).unwrap();
        let u = [0.3, -1.1, 4.0];
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let next = aggregate(&Strategy::fedavg_two_sided(), &[upd(0, &u), upd(1, &neg)], &state).unwrap();
        assert!(next.prev_global_update.is_zero());
        assert_eq!(next.global_params, state.global_params);
    }

    #[test]
    fn empty_round_is_an_error() {
        let state = ServerState::new(pv(&[0.0]), 1.0).unwrap();
        assert!(matches!(aggregate(&Strategy::feddpc(1.0), &[], &state), Err(Error::NoUpdates)));
    }

    #[test]
    fn order_of_arrival_does_not_matter() {
        let state = ServerState {
            prev_global_update: pv(&[0.3, 0.1, -0.2]),
            ..ServerState::new(pv(&[0.0, 0.0, 0.0]), 1.0).unwrap()
        };
        let a = [upd(2, &[1.0, 2.0, 3.0]), upd(0, &[0.1, -0.7, 0.2]), upd(5, &[1e-3, 4.0, -2.0])];
        let mut b = a.clone();
        b.reverse();
        let s = Strategy::feddpc(1.0);
        assert_eq!(aggregate(&s, &a, &state).unwrap(), aggregate(&s, &b, &state).unwrap());
    }

    #[test]
    fn feddpc_global_update_is_orthogonal_to_previous() {
        let prev = pv(&[0.3, 0.1, -0.2, 1.0]);
        let state = ServerState {
            prev_global_update: prev.clone(),
            ..ServerState::new(ParamVector::zeros(4), 1.0).unwrap()
        };
        let ups = [upd(0, &[1.0, 2.0, 3.0, 4.0]), upd(1, &[-0.5, 0.7, 0.2, 0.0]), upd(2, &[2.0, -4.0, 1.0, 0.3])];
        for s in [Strategy::feddpc(1.0), Strategy::feddpc_noscale()] {
            let next = aggregate(&s, &ups, &state).unwrap();
            let d = dot(&next.prev_global_update, &prev).unwrap();
            assert!(d.abs() <= 1e-8 * norm(&next.prev_global_update) * norm(&prev));
        }
    }

    #[test]
    fn parallel_update_counts_in_denominator() {
        let prev = pv(&[1.0, 0.0]);
        let state = ServerState {
            prev_global_update: prev,
            ..ServerState::new(pv(&[0.0, 0.0]), 1.0).unwrap()
        };
        let ups = [upd(0, &[2.0, 0.0]), upd(1, &[3.0, 4.0])];
        let next = aggregate(&Strategy::feddpc(1.0), &ups, &state).unwrap();
        assert_eq!(next.prev_global_update, pv(&[0.0, 4.5]));
    }

    #[test]
    fn pipeline_flags_reproduce_strategies() {
        let delta = pv(&[0.4, -1.3, 2.2]);
        let prev = pv(&[1.0, 0.5, -0.25]);
        let eps = DEFAULT_EPS;
        let full = Pipeline {
            projection: ProjectionStep::Orthogonal,
            scaling: ScalingStep::Adaptive { lambda: 0.7 },
            eps,
        };
        let mut s = Strategy::feddpc(0.7);
        assert_eq!(full.apply(&delta, &prev).unwrap(), s.transform(&delta, &prev).unwrap());
        s.kind = StrategyKind::FedDpcNoScale;
        let noscale = Pipeline {
            scaling: ScalingStep::Identity,
            ..full
        };
        assert_eq!(noscale.apply(&delta, &prev).unwrap(), s.transform(&delta, &prev).unwrap());
        s.kind = StrategyKind::FedAvgTwoSided;
        let plain = Pipeline {
            projection: ProjectionStep::Zero,
            ..noscale
        };
        assert_eq!(plain.apply(&delta, &prev).unwrap(), s.transform(&delta, &prev).unwrap());
    }

    #[test]
    fn strategy_names_round_trip_through_display() {
        for k in [StrategyKind::FedDpc, StrategyKind::FedDpcNoScale, StrategyKind::FedAvgTwoSided] {
            assert!(!k.to_string().is_empty());
        }
        assert_eq!(StrategyKind::FedAvgTwoSided.to_string(), "fedavg_two_sided");
    }
}
