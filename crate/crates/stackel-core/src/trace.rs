//! Per-iteration solver records shared by both outer algorithms.

use crate::error::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub y: Vec<f64>,
    /// Leader objective in the problem's own convention (minimized for
    /// problems registered with native sign `−1`).
    pub leader_objective: f64,
    pub follower_objectives: Vec<f64>,
    pub ve_residual: f64,
    /// `‖y^(t+1) − y^(t)‖` for PIGD, `‖(y, x)^(t+1) − (y, x)^(t)‖` for the
    /// proximal baseline.
    pub step_norm: f64,
    pub active_set: Option<u64>,
    /// Milliseconds since the solve started. Not part of the deterministic
    /// trace output.
    pub wall_ms: f64,
}

impl TraceRecord {
    pub fn mean_follower_objective(&self) -> f64 {
        if self.follower_objectives.is_empty() {
            return 0.0;
        }
        self.follower_objectives.iter().sum::<f64>() / self.follower_objectives.len() as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace {
    pub solver: String,
    pub records: Vec<TraceRecord>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveTrace {
    pub fn new(solver: &str) -> Self {
        Self { solver: solver.to_string(), ..Self::default() }
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Appends `rec`, or replaces the last record if it has the same index.
    pub(crate) fn push(&mut self, rec: TraceRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.t <= rec.t));
        if self.records.last().is_some_and(|r| r.t == rec.t) {
            self.records.pop();
        }
        self.records.push(rec);
    }
}

/// A solve that stopped on an error, with the trace recorded so far.
#[derive(Debug, thiserror::Error)]
#[error("{error} (after {} recorded iterations)", trace.records.len())]
pub struct SolveAbort {
    #[source]
    pub error: Error,
    pub trace: SolveTrace,
}
