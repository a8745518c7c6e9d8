//! Experiment metrics and the minimum-gain search.
//!
//! The comparison protocol scores each compensator by the smallest
//! proportional gain at which it still tracks accurately: better friction
//! compensation needs less feedback stiffness. Supporting metrics are the
//! tracking RMSE, the post-disturbance recovery RMSE, and a current-squared
//! energy proxy. Reports collect one row per compensator.

mod wrench;

pub use wrench::{joint_axis_moment, wrench_transform, JointPose, Wrench};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::control::{ExperimentTrace, TorquePulse};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Trace metrics
// ---------------------------------------------------------------------------

/// Root-mean-square of (s_des − s) from `t_start` to the end of the trace.
pub fn tracking_rmse(trace: &ExperimentTrace, t_start: f64) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for ((&t, &s), &d) in trace.t.iter().zip(&trace.s).zip(&trace.s_des) {
        if t >= t_start {
            acc += (d - s) * (d - s);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no trace samples at or after t_start"));
    }
    Ok((acc / n as f64).sqrt())
}

/// RMSE of (s_des − s) over the `window` seconds after the pulse ends.
pub fn disturbance_recovery(
    trace: &ExperimentTrace,
    pulse: &TorquePulse,
    window: f64,
) -> Result<f64> {
    let t0 = pulse.t_end();
    let t1 = t0 + window;
    let mut acc = 0.0;
    let mut n = 0usize;
    for ((&t, &s), &d) in trace.t.iter().zip(&trace.s).zip(&trace.s_des) {
        if t >= t0 && t < t1 {
            acc += (d - s) * (d - s);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("trace does not cover the recovery window"));
    }
    Ok((acc / n as f64).sqrt())
}

/// Σ i_ref²·dt (A²·s), a proxy for the electrical effort of a run.
pub fn energy_proxy(trace: &ExperimentTrace) -> f64 {
    let dt = 1.0 / trace.rate;
    trace.i_ref.iter().map(|i| i * i * dt).sum()
}

// ---------------------------------------------------------------------------
// Minimum-Kp search
// ---------------------------------------------------------------------------

/// Logarithmic gain grid with `per_decade` points per decade over
/// [`lo`, `hi`], endpoints included.
pub fn kp_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && per_decade >= 1) {
        return Err(Error::invalid("grid needs hi > lo > 0 and per_decade >= 1"));
    }
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).ceil() as usize;
    let mut grid: Vec<f64> = (0..=n)
        .map(|k| lo * 10f64.powf(k as f64 / per_decade as f64))
        .take_while(|&v| v < hi * (1.0 - 1e-12))
        .collect();
    grid.push(hi);
    Ok(grid)
}

/// Outcome of a gain search: the smallest achieving gain (if any) and the
/// full (K_p, RMSE) curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpSearchOutcome {
    pub min_kp: Option<f64>,
    pub curve: Vec<(f64, f64)>,
}

/// Evaluates the tracking RMSE at every grid gain (concurrently; each
/// evaluation owns its simulator) and returns the smallest gain with
/// RMSE ≤ `threshold`.
pub fn min_kp_search<F>(grid: &[f64], threshold: f64, eval: F) -> Result<KpSearchOutcome>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(Error::invalid("empty gain grid"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("gain grid must be strictly increasing"));
    }
    let curve: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&kp| eval(kp).map(|rmse| (kp, rmse)))
        .collect::<Result<_>>()?;
    let min_kp = curve
        .iter()
        .find(|(_, rmse)| *rmse <= threshold)
        .map(|(kp, _)| *kp);
    Ok(KpSearchOutcome { min_kp, curve })
}

/// Binary search for the achievement boundary, assuming RMSE ≤ threshold is
/// monotone in the gain. Cheaper than the full scan; the scan remains the
/// reference answer.
pub fn min_kp_bisect<F>(grid: &[f64], threshold: f64, eval: F) -> Result<Option<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::invalid("empty gain grid"));
    }
    if eval(*grid.last().unwrap())? > threshold {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0usize, grid.len() - 1);
    // Invariant: grid[hi] achieves; grid[lo] unknown-or-failing.
    while lo < hi {
        let mid = (lo + hi) / 2;
        if eval(grid[mid])? <= threshold {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(grid[hi]))
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One comparison row: how a compensator fared across the experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: String,
    /// Tracking RMSE (rad) at the reported gains.
    pub tracking_rmse: f64,
    /// Applied joint-axis moment during the disturbance experiment (N·m).
    pub disturbance_moment: f64,
    /// Smallest gain that met the tracking threshold, if any.
    pub min_kp: Option<f64>,
    pub k_d: f64,
    /// Recovery RMSE (rad) after the disturbance pulse.
    pub recovery_rmse: f64,
    /// Σ i_ref²·dt (A²·s) on the tracking run.
    pub energy_proxy: f64,
    /// Trace file the row was computed from.
    pub trace_path: String,
}

/// Renders the comparison table; column order is fixed.
pub fn render_report(reports: &[ExperimentReport]) -> String {
    let mut out = String::new();
    out.push_str("| model | rmse | moment | kp | kd |\n");
    out.push_str("|---|---|---|---|---|\n");
    for r in reports {
        let kp = r
            .min_kp
            .map_or_else(|| "not achieved".to_string(), |v| format!("{v:.1}"));
        let _ = writeln!(
            out,
            "| {} | {:.4} | {:.2} | {} | {:.1} |",
            r.model, r.tracking_rmse, r.disturbance_moment, kp, r.k_d
        );
    }
    out
}

/// Writes the Markdown table plus a details section with the remaining
/// metrics per row. `comments` lines (config hash, seed) go into an HTML
/// comment at the top so the rendered document stays clean.
pub fn emit_report(reports: &[ExperimentReport], path: &Path, comments: &[String]) -> Result<()> {
    let mut text = String::new();
    for line in comments {
        let _ = writeln!(text, "<!-- {line} -->");
    }
    if !comments.is_empty() {
        text.push('\n');
    }
    text.push_str("# Compensator comparison\n\n");
    text.push_str(&render_report(reports));
    if !reports.is_empty() {
        text.push_str("\n## Details\n\n");
        for r in reports {
            let _ = writeln!(
                text,
                "- `{}`: recovery RMSE {:.4} rad, energy proxy {:.4} A²·s, trace `{}`",
                r.model, r.recovery_rmse, r.energy_proxy, r.trace_path
            );
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}
