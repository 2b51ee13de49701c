//! Per-step records, run summaries and their text serializations.
//!
//! CSV columns, in order (SI units, angles in rad):
//!
//! | columns | content |
//! |---|---|
//! | `step`, `time` | sample index and `t_k` |
//! | `px … steer` (11) | truth plant state at `t_k` |
//! | `meas_px … meas_steer` (11) | raw noisy measurement |
//! | `filt_px … filt_steer` (9) | filtered, axle-averaged measurement fed to the controller |
//! | `ref_px`, `ref_py`, `ref_speed` | reference at `t_k` |
//! | `torque`, `steer_rate` | input applied over `[t_k, t_{k+1})` |
//! | `input_from` | measurement time the applied input was computed from (`nan` before the first decision) |
//! | `wind_speed`, `wind_dir` | wind over `[t_k, t_{k+1})` |
//! | `error` | planar distance between truth and reference position |
//! | `qp_status`, `fallback`, `qp_iter`, `sqp_iter` | controller diagnostics of the call at `t_k` |
//! | `friction_row`, `box_violation` | largest linearized friction row (fraction of the budget) and input box excess |
//! | `step_time` | controller wall time (s); omitted without timing |

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::controller::ControllerMode;
use crate::qp::QpStatus;
use crate::vehicle::{ControlInput, PlantState, PredictionState, WindCondition};

use super::trajectory::ReferencePoint;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub truth: PlantState,
    pub measurement: PlantState,
    pub filtered: PredictionState,
    pub reference: ReferencePoint,
    pub input: ControlInput,
    pub input_from: Option<f64>,
    pub wind: WindCondition,
    pub tracking_error: f64,
    pub qp_status: QpStatus,
    pub fallback: bool,
    pub qp_iterations: usize,
    pub sqp_iterations: usize,
    pub friction_violation: f64,
    pub box_violation: f64,
    /// Controller wall time (s).
    pub step_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub mode: ControllerMode,
    pub seed: u64,
    pub dt: f64,
    /// Samples excluded from the tracking statistics.
    pub transient: f64,
    pub records: Vec<StepRecord>,
    /// Set when the run stopped early.
    pub aborted: Option<String>,
}

/// Order statistics of a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let pick = |q: f64| {
            let idx = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
            s[idx]
        };
        Self {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: if s.len() % 2 == 1 {
                s[s.len() / 2]
            } else {
                0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
            },
            p95: pick(0.95),
            max: s[s.len() - 1],
        }
    }
}

/// Tolerance on the normalized friction rows and the input box used when
/// counting constraint violations.
pub const FRICTION_TOLERANCE: f64 = 1e-6;
pub const BOX_TOLERANCE: f64 = 1e-9;
/// Tracking error that counts as having converged (m).
pub const SETTLE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub mode: ControllerMode,
    pub seed: u64,
    pub steps: usize,
    pub aborted: bool,
    /// RMS tracking error over samples at or after the transient (m).
    pub rms_error: f64,
    pub max_error: f64,
    pub max_error_after_transient: f64,
    /// First time the error drops below [`SETTLE_THRESHOLD`] (s), NaN if never.
    pub settle_time: f64,
    /// Controller wall time excluding the first (warm-up) call.
    pub step_time: Stats,
    pub constraint_violations: usize,
    pub fallbacks: usize,
    pub mean_sqp_iterations: f64,
    pub median_sqp_iterations: f64,
    pub mean_qp_iterations: f64,
}

impl SimLog {
    pub fn tracking_errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tracking_error).collect()
    }

    pub fn inputs(&self) -> Vec<ControlInput> {
        self.records.iter().map(|r| r.input).collect()
    }

    pub fn step_times(&self) -> Vec<f64> {
        self.records.iter().skip(1).map(|r| r.step_time).collect()
    }

    pub fn summary(&self) -> SimSummary {
        let after: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.time >= self.transient - 1e-9)
            .map(|r| r.tracking_error)
            .collect();
        let rms = if after.is_empty() {
            f64::NAN
        } else {
            (after.iter().map(|e| e * e).sum::<f64>() / after.len() as f64).sqrt()
        };
        let settle_time = self
            .records
            .iter()
            .find(|r| r.tracking_error < SETTLE_THRESHOLD)
            .map_or(f64::NAN, |r| r.time);
        let sqp: Vec<f64> = self.records.iter().map(|r| r.sqp_iterations as f64).collect();
        let qp: Vec<f64> = self.records.iter().map(|r| r.qp_iterations as f64).collect();
        SimSummary {
            mode: self.mode,
            seed: self.seed,
            steps: self.records.len(),
            aborted: self.aborted.is_some(),
            rms_error: rms,
            max_error: self.records.iter().map(|r| r.tracking_error).fold(0.0, f64::max),
            max_error_after_transient: after.iter().copied().fold(0.0, f64::max),
            settle_time,
            step_time: Stats::of(&self.step_times()),
            constraint_violations: self
                .records
                .iter()
                .filter(|r| r.box_violation > BOX_TOLERANCE || r.friction_violation > FRICTION_TOLERANCE)
                .count(),
            fallbacks: self.records.iter().filter(|r| r.fallback).count(),
            mean_sqp_iterations: Stats::of(&sqp).mean,
            median_sqp_iterations: Stats::of(&sqp).median,
            mean_qp_iterations: Stats::of(&qp).mean,
        }
    }

    pub fn write_csv(&self, mut out: impl Write, timing: bool) -> io::Result<()> {
        let state_names = ["px", "py", "heading", "vx", "vy", "yaw_rate", "w_fl", "w_fr", "w_rl", "w_rr", "steer"];
        let pred_names = ["px", "py", "heading", "vx", "vy", "yaw_rate", "w_front", "w_rear", "steer"];
        let mut header = vec!["step".to_string(), "time".to_string()];
        header.extend(state_names.iter().map(|s| s.to_string()));
        header.extend(state_names.iter().map(|s| format!("meas_{s}")));
        header.extend(pred_names.iter().map(|s| format!("filt_{s}")));
        for h in [
            "ref_px",
            "ref_py",
            "ref_speed",
            "torque",
            "steer_rate",
            "input_from",
            "wind_speed",
            "wind_dir",
            "error",
            "qp_status",
            "fallback",
            "qp_iter",
            "sqp_iter",
            "friction_row",
            "box_violation",
        ] {
            header.push(h.to_string());
        }
        if timing {
            header.push("step_time".to_string());
        }
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            write!(line, "{},{}", r.step, r.time).unwrap();
            for v in r.truth.to_vector().iter().chain(r.measurement.to_vector().iter()) {
                write!(line, ",{v}").unwrap();
            }
            for v in r.filtered.to_vector().iter() {
                write!(line, ",{v}").unwrap();
            }
            write!(
                line,
                ",{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.reference.px,
                r.reference.py,
                r.reference.speed,
                r.input.torque,
                r.input.steer_rate,
                r.input_from.unwrap_or(f64::NAN),
                r.wind.speed,
                r.wind.direction,
                r.tracking_error,
                r.qp_status.as_str(),
                r.fallback as u8,
                r.qp_iterations,
                r.sqp_iterations,
                r.friction_violation,
                r.box_violation,
            )
            .unwrap();
            if timing {
                write!(line, ",{}", r.step_time).unwrap();
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn csv_string(&self, timing: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, timing).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

impl SimSummary {
    /// Flat `key = value` block. Timing keys are omitted without `timing`.
    pub fn to_text(&self, timing: bool) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mode", self.mode.as_str().to_string());
        kv("seed", self.seed.to_string());
        kv("steps", self.steps.to_string());
        kv("aborted", self.aborted.to_string());
        kv("rms_error_after_transient", self.rms_error.to_string());
        kv("max_error", self.max_error.to_string());
        kv("max_error_after_transient", self.max_error_after_transient.to_string());
        kv("settle_time", self.settle_time.to_string());
        kv("constraint_violations", self.constraint_violations.to_string());
        kv("fallbacks", self.fallbacks.to_string());
        kv("mean_sqp_iterations", self.mean_sqp_iterations.to_string());
        kv("median_sqp_iterations", self.median_sqp_iterations.to_string());
        kv("mean_qp_iterations", self.mean_qp_iterations.to_string());
        if timing {
            kv("step_time_mean", self.step_time.mean.to_string());
            kv("step_time_median", self.step_time.median.to_string());
            kv("step_time_p95", self.step_time.p95.to_string());
            kv("step_time_max", self.step_time.max.to_string());
        }
        s
    }
}
