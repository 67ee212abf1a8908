//! Solver trace records, written as JSON lines.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Barrier update; `tau` is the new value, norms are taken before it.
    Outermost,
    /// One step length tried by the outer iteration.
    OuterTrial,
    /// Accepted outer step; norms are taken at the incumbent before it.
    Outer,
    /// Accepted inner step; `residual_norm` and `merit` before the step,
    /// `lambda_norm` and `constraint_norm` after it.
    Inner,
    /// End of an inner solve.
    InnerConverged,
    /// Outer step of the final refinement at `tau_end`.
    RefineOuter,
    /// Newton step of the final refinement; `residual_norm` before the
    /// step, `residual_after` after it.
    Polish,
}

impl EventKind {
    /// 0 for the barrier loop, 1 for the outer loop, 2 for the inner loop.
    pub fn level(self) -> u8 {
        match self {
            Self::Outermost => 0,
            Self::OuterTrial | Self::Outer | Self::RefineOuter => 1,
            Self::Inner | Self::InnerConverged | Self::Polish => 2,
        }
    }
}

/// Infinite or undefined values are stored as `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub event: EventKind,
    pub level: u8,
    pub outermost_iter: usize,
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merit_new: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_box: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backtracks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia_shifts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_norm_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recenter: Option<bool>,
}

impl TraceRecord {
    pub fn new(event: EventKind, outermost_iter: usize, outer_iter: usize, tau: f64) -> Self {
        Self {
            event,
            level: event.level(),
            outermost_iter,
            outer_iter,
            inner_iter: 0,
            tau,
            residual_norm: None,
            residual_after: None,
            merit: None,
            merit_new: None,
            slope: None,
            alpha: None,
            alpha_init: None,
            alpha_box: None,
            backtracks: None,
            rho_tilde: None,
            inertia_shifts: None,
            lambda_norm: None,
            lambda_norm_after: None,
            constraint_norm: None,
            aux_steps: None,
            accepted: None,
            recenter: None,
        }
    }
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::Io(e.into()))?);
    }
    Ok(records)
}
