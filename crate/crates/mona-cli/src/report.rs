//! Run reports: the JSON/plain-text summary a pipeline run produces, the
//! per-frame alignment-error table for plotting, and the aggregate summary
//! for multi-seed batches.

use mona_core::dynamic_points::{DynamicConfig, FlowFrameStats};
use mona_core::traj_eval::{EvalConfig, TrajectoryMetrics};
use serde::{Deserialize, Serialize};

/// Per-frame counters gathered across the stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerFrameCounts {
    pub frame: usize,
    /// Non-anchor tracked points visible in the frame.
    pub detection_points: usize,
    /// Anchor tracks visible in the frame.
    pub anchors: usize,
    /// Points flagged dynamic in the frame.
    pub dynamic_points: usize,
    /// Detector boxes in the frame.
    pub boxes: usize,
    /// Boxes kept by the filter.
    pub kept_boxes: usize,
}

/// Parameters echoed into the report so a result is interpretable on its
/// own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfigEcho {
    pub dynamic: DynamicConfig,
    pub tau_0: f64,
    pub eval: EvalConfig,
}

/// Complete summary of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub tool_version: String,
    pub seed: u64,
    pub config: ReportConfigEcho,
    pub per_frame: Vec<PerFrameCounts>,
    pub flow_stats: Vec<FlowFrameStats>,
    pub unmasked: TrajectoryMetrics,
    pub masked: TrajectoryMetrics,
    pub ate_improvement_percent: f64,
    pub rpe_translation_improvement_percent: f64,
    pub rpe_rotation_improvement_percent: f64,
}

/// Percent reduction from `unmasked` to `masked`; zero when the unmasked
/// value is already zero.
pub fn improvement_percent(unmasked: f64, masked: f64) -> f64 {
    if unmasked == 0.0 {
        0.0
    } else {
        (unmasked - masked) / unmasked * 100.0
    }
}

impl RunReport {
    /// Fixed-precision human-readable rendering.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("mona run report (tool version {})\n", self.tool_version));
        out.push_str(&format!("seed: {}\n", self.seed));
        out.push_str(&format!(
            "params: lambda={:.6} flow_scale={:.6} theta_min={:.6} p_min={:.6} grid_k={} tau_0={:.6} alignment={} rpe_delta={}\n",
            self.config.dynamic.lambda,
            self.config.dynamic.flow_scale,
            self.config.dynamic.theta_min,
            self.config.dynamic.p_min,
            self.config.dynamic.grid_k,
            self.config.tau_0,
            self.config.eval.alignment,
            self.config.eval.rpe_delta,
        ));
        out.push('\n');
        out.push_str("frame  points  anchors  dynamic  boxes  kept\n");
        for row in &self.per_frame {
            out.push_str(&format!(
                "{:>5}  {:>6}  {:>7}  {:>7}  {:>5}  {:>4}\n",
                row.frame,
                row.detection_points,
                row.anchors,
                row.dynamic_points,
                row.boxes,
                row.kept_boxes
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "unmasked: ate_rmse={:.6} rpe_trans_rmse={:.6} rpe_rot_rmse_deg={:.6}\n",
            self.unmasked.ate_rmse,
            self.unmasked.rpe_translation_rmse,
            self.unmasked.rpe_rotation_rmse_deg
        ));
        out.push_str(&format!(
            "masked:   ate_rmse={:.6} rpe_trans_rmse={:.6} rpe_rot_rmse_deg={:.6}\n",
            self.masked.ate_rmse,
            self.masked.rpe_translation_rmse,
            self.masked.rpe_rotation_rmse_deg
        ));
        out.push_str(&format!(
            "improvement: ate={:.6}% rpe_trans={:.6}% rpe_rot={:.6}%\n",
            self.ate_improvement_percent,
            self.rpe_translation_improvement_percent,
            self.rpe_rotation_improvement_percent
        ));
        out
    }
}

/// Columnar per-frame alignment residuals, one line per frame present in
/// both runs: `frame unmasked masked`.
pub fn render_ate_plot(
    unmasked: &[(usize, f64)],
    masked: &[(usize, f64)],
) -> String {
    let mut out = String::from("# frame unmasked_ate masked_ate\n");
    let mut j = 0usize;
    for &(frame, u) in unmasked {
        while j < masked.len() && masked[j].0 < frame {
            j += 1;
        }
        if j < masked.len() && masked[j].0 == frame {
            out.push_str(&format!("{frame} {u:.9} {:.9}\n", masked[j].1));
            j += 1;
        }
    }
    out
}

/// One seed's outcome inside a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedOutcome {
    pub seed: u64,
    pub unmasked_ate: f64,
    pub masked_ate: f64,
    pub ate_improvement_percent: f64,
}

/// Aggregate over a seed sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSummary {
    pub tool_version: String,
    pub base_seed: u64,
    pub seeds: Vec<SeedOutcome>,
    pub median_ate_improvement_percent: f64,
    /// Fraction of seeds where the masked run was at least as accurate.
    pub masked_not_worse_fraction: f64,
}

/// Median of an unsorted list; the mean of the middle two for even lengths.
/// NaN for an empty list.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median values must be comparable"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
