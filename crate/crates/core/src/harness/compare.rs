//! Cross-run comparison at matched cumulative inner-iteration counts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{read_trace_csv, TraceRow};

use super::read_sidecar;

/// Normalized gap threshold under which a run is considered to have reached a
/// meaningful precision; runs that never get below it are flagged stagnant.
pub const STAGNATION_LEVEL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    First,
    Second,
    Tie,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub first: String,
    pub second: String,
    /// Matched cumulative Sinkhorn budget at which the gap is compared.
    pub at_inner: u64,
    pub nfval_first: f64,
    pub nfval_second: f64,
    pub winner: Winner,
    pub stagnant_first: bool,
    pub stagnant_second: bool,
}

/// Piecewise-linear interpolation of the normalized gap at a cumulative
/// inner-iteration count; clamps before the first row, `None` past the last.
pub fn nfval_at_inner(rows: &[TraceRow], target: u64) -> Option<f64> {
    let first = rows.first()?;
    if target <= first.cum_inner_iters {
        return Some(first.nfval);
    }
    let last = rows.last()?;
    if target > last.cum_inner_iters {
        return None;
    }
    let idx = rows.partition_point(|r| r.cum_inner_iters < target);
    let hi = &rows[idx];
    if hi.cum_inner_iters == target || idx == 0 {
        return Some(hi.nfval);
    }
    let lo = &rows[idx - 1];
    let span = (hi.cum_inner_iters - lo.cum_inner_iters) as f64;
    let w = (target - lo.cum_inner_iters) as f64 / span;
    Some(lo.nfval * (1.0 - w) + hi.nfval * w)
}

fn stagnant(rows: &[TraceRow], budget: u64) -> bool {
    !rows
        .iter()
        .take_while(|r| r.cum_inner_iters <= budget)
        .any(|r| r.nfval < STAGNATION_LEVEL)
}

/// Compares two trace files on the same instance at the smaller of their
/// final inner budgets.
pub fn compare_runs(first_csv: &Path, second_csv: &Path) -> Result<CompareReport> {
    let meta_a = read_sidecar(first_csv)?;
    let meta_b = read_sidecar(second_csv)?;
    if meta_a.meta.instance != meta_b.meta.instance {
        return Err(Error::TraceMismatch(format!(
            "instances differ: '{}' vs '{}'",
            meta_a.meta.instance, meta_b.meta.instance
        )));
    }
    match (meta_a.meta.f_star, meta_b.meta.f_star) {
        (Some(fa), Some(fb)) => {
            if (fa - fb).abs() > 1e-9 * fa.abs().max(1.0) {
                return Err(Error::TraceMismatch(format!(
                    "reference values differ: {fa} vs {fb}"
                )));
            }
        }
        _ => {
            return Err(Error::TraceMismatch(
                "both traces need a reference value for nfval comparison".into(),
            ))
        }
    }
    let rows_a = read_trace_csv(first_csv)?;
    let rows_b = read_trace_csv(second_csv)?;
    if rows_a.is_empty() || rows_b.is_empty() {
        return Err(Error::TraceMismatch("cannot compare empty traces".into()));
    }
    let budget = rows_a
        .last()
        .unwrap()
        .cum_inner_iters
        .min(rows_b.last().unwrap().cum_inner_iters);
    let nfval_first = nfval_at_inner(&rows_a, budget)
        .ok_or_else(|| Error::TraceMismatch("first trace has no rows at the budget".into()))?;
    let nfval_second = nfval_at_inner(&rows_b, budget)
        .ok_or_else(|| Error::TraceMismatch("second trace has no rows at the budget".into()))?;
    let winner = if (nfval_first - nfval_second).abs()
        <= 1e-12 * nfval_first.abs().max(nfval_second.abs()).max(1e-300)
    {
        Winner::Tie
    } else if nfval_first < nfval_second {
        Winner::First
    } else {
        Winner::Second
    };
    Ok(CompareReport {
        first: first_csv.display().to_string(),
        second: second_csv.display().to_string(),
        at_inner: budget,
        nfval_first,
        nfval_second,
        winner,
        stagnant_first: stagnant(&rows_a, budget),
        stagnant_second: stagnant(&rows_b, budget),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, nfval: f64, cum: u64) -> TraceRow {
        TraceRow {
            k,
            fval: 0.0,
            nfval,
            mu_measured: 0.0,
            delta_norm: 0.0,
            inner_iters: 0,
            cum_inner_iters: cum,
            theta: f64::NAN,
            bound_rhs_last: f64::NAN,
            bound_rhs_avg: f64::NAN,
            nu_claimed: 0.0,
        }
    }

    #[test]
    fn interpolation_brackets_and_clamps() {
        let rows = vec![row(0, 1.0, 10), row(1, 0.5, 20), row(2, 0.25, 40)];
        assert_eq!(nfval_at_inner(&rows, 5), Some(1.0));
        assert_eq!(nfval_at_inner(&rows, 10), Some(1.0));
        assert!((nfval_at_inner(&rows, 15).unwrap() - 0.75).abs() < 1e-15);
        assert!((nfval_at_inner(&rows, 30).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(nfval_at_inner(&rows, 40), Some(0.25));
        assert_eq!(nfval_at_inner(&rows, 41), None);
    }

    #[test]
    fn stagnation_detection() {
        let good = vec![row(0, 1e-3, 10), row(1, 1e-7, 20)];
        let bad = vec![row(0, 1e-3, 10), row(1, 5e-6, 20)];
        assert!(!stagnant(&good, 20));
        assert!(stagnant(&bad, 20));
    }
}
