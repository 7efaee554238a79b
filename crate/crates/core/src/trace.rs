//! Per-iteration run records.

use serde::Serialize;

use crate::oracle::Counts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Iter,
    Restart,
}

impl Event {
    pub fn as_str(self) -> &'static str {
        match self {
            Event::Iter => "iter",
            Event::Restart => "restart",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub event: Event,
    pub a_k: f64,
    pub f_gap: Option<f64>,
    pub dual_gap: Option<f64>,
    pub grad_norm: Option<f64>,
    pub constraint_norm: Option<f64>,
    pub counts: Counts,
}

impl TraceRow {
    pub fn new(iter: usize, event: Event, a_k: f64, counts: Counts) -> Self {
        Self {
            iter,
            event,
            a_k,
            f_gap: None,
            dual_gap: None,
            grad_norm: None,
            constraint_norm: None,
            counts,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// Non-fatal diagnostics raised during the run (inner-solver caps, step overflow...).
    pub flags: Vec<String>,
}

impl RunTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn flag(&mut self, msg: impl Into<String>) {
        self.flags.push(msg.into());
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iterations(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.event == Event::Iter)
    }

    pub fn restarts(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.event == Event::Restart)
    }

    /// Counters must never decrease from one row to the next.
    pub fn counters_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].counts.le(&w[1].counts))
    }
}
