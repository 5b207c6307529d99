//! Iteration schemes, step schedules and iterate traces.

mod methods;
mod schedule;
mod trace;

pub use methods::{
    amd_iterate, amd_lambda, gd_step, lamd_run, lmd_step, md_step, nesterov_run, run, AmdParams,
    AmdState, Method, RunConfig,
};
pub use schedule::{extend_schedule, ExtensionRule, StepSchedule};
pub use trace::{parse_traces_csv, traces_to_csv, IterateTrace, TraceRecord, DIVERGENCE_FACTOR, TRACE_CSV_HEADER};

use crate::scalar::Scalar;

/// Least-squares slope of `log(subopt)` against `log(k)` over the records
/// with `k_min ≤ k ≤ k_max` and positive suboptimality. `None` if fewer
/// than two such points exist.
pub fn loglog_slope<T: Scalar>(trace: &IterateTrace<T>, k_min: usize, k_max: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| r.k >= k_min.max(1) && r.k <= k_max)
        .map(|r| (r.k as f64, r.subopt.as_f64()))
        .filter(|(_, s)| *s > 0.0 && s.is_finite())
        .map(|(k, s)| (k.ln(), s.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests;
