//! Stable CSV layouts for run artifacts.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always produce identical bytes.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::orchestrator::{GridRow, RunResult};
use crate::server::StrategyKind;

pub const METRICS_HEADER: &str = "round,avg_train_loss,test_loss,test_accuracy,wall_ms";
pub const COMPARISON_HEADER: &str = "name,best_accuracy,best_round,avg_round_wall_ms";
pub const SWEEP_HEADER: &str = "lambda,lr,best_accuracy,best_round,error";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Quotes a CSV field when needed.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// One row per round. With `wall_clock` off the `wall_ms` column is `0`,
/// which keeps the file a pure function of the configuration.
pub fn metrics_csv(result: &RunResult, wall_clock: bool) -> String {
    let mut out = String::with_capacity(64 * (result.per_round.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for m in &result.per_round {
        let wall = if wall_clock { m.wall_ms } else { 0.0 };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            m.round,
            m.avg_train_loss,
            opt(m.test_loss),
            opt(m.test_accuracy),
            wall
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub best_accuracy: f64,
    pub best_round: usize,
    pub rounds: usize,
    pub strategy: StrategyKind,
    pub lambda: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub best_accuracy: f64,
    pub best_round: usize,
    pub avg_round_wall_ms: f64,
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            field(&r.name),
            r.best_accuracy,
            r.best_round,
            r.avg_round_wall_ms
        );
    }
    out
}

pub fn sweep_csv(rows: &[GridRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = match &r.outcome {
            Ok((acc, round)) => writeln!(out, "{},{},{},{},", r.lambda, r.lr, acc, round),
            Err(e) => writeln!(out, "{},{},,,{}", r.lambda, r.lr, field(e)),
        };
    }
    out
}
