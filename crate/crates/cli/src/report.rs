//! Timing and agreement report for an RTI versus SQP comparison.

use std::fmt::Write as _;

use rti_nmpc::sim::{SimLog, Stats};

use crate::linear::LinearLog;

/// What the report needs from one run of either model.
#[derive(Debug, Clone)]
pub struct ModeRun {
    pub inputs: Vec<Vec<f64>>,
    pub step_times: Vec<f64>,
    pub sqp_iterations: Vec<f64>,
    pub rms_error: f64,
}

impl From<&SimLog> for ModeRun {
    fn from(log: &SimLog) -> Self {
        Self {
            inputs: log.inputs().iter().map(|u| vec![u.torque, u.steer_rate]).collect(),
            step_times: log.step_times(),
            sqp_iterations: log.records.iter().map(|r| r.sqp_iterations as f64).collect(),
            rms_error: log.summary().rms_error,
        }
    }
}

impl From<&LinearLog> for ModeRun {
    fn from(log: &LinearLog) -> Self {
        Self {
            inputs: log.records.iter().map(|r| vec![r.input]).collect(),
            step_times: log.records.iter().map(|r| r.step_time).collect(),
            sqp_iterations: log.records.iter().map(|r| r.sqp_iterations as f64).collect(),
            rms_error: log.rms_error(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HostInfo {
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
    pub cpu: String,
    pub note: String,
}

impl HostInfo {
    pub fn detect(note: &str) -> Self {
        let cpu = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        Self {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu,
            note: note.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InputAgreement {
    pub name: &'static str,
    pub rms_diff: f64,
    /// `rms_diff` over the input's normalization range.
    pub relative: f64,
}

#[derive(Debug, Clone)]
pub struct ModeStats {
    pub step_time: Stats,
    pub rms_error: f64,
    pub median_sqp_iterations: f64,
    pub steps: usize,
}

impl ModeStats {
    /// Pools step times of every repetition; accuracy figures come from the first.
    fn of(runs: &[ModeRun]) -> Self {
        let times: Vec<f64> = runs.iter().flat_map(|r| r.step_times.iter().copied()).collect();
        Self {
            step_time: Stats::of(&times),
            rms_error: runs[0].rms_error,
            median_sqp_iterations: Stats::of(&runs[0].sqp_iterations).median,
            steps: runs[0].inputs.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub host: HostInfo,
    pub model: &'static str,
    pub reps: usize,
    pub rti: ModeStats,
    pub sqp: ModeStats,
    /// Mean SQP step time over mean RTI step time.
    pub speedup: f64,
    pub inputs: Vec<InputAgreement>,
}

impl BenchmarkReport {
    /// `rti` and `sqp` hold one run per repetition, all on the same scenario.
    pub fn new(
        host: HostInfo,
        model: &'static str,
        rti: &[ModeRun],
        sqp: &[ModeRun],
        input_names: &[&'static str],
        input_ranges: &[f64],
    ) -> Self {
        let (a, b) = (ModeStats::of(rti), ModeStats::of(sqp));
        let steps = rti[0].inputs.len().min(sqp[0].inputs.len()).max(1);
        let inputs = input_names
            .iter()
            .zip(input_ranges)
            .enumerate()
            .map(|(c, (&name, &range))| {
                let sq: f64 = rti[0]
                    .inputs
                    .iter()
                    .zip(&sqp[0].inputs)
                    .map(|(u, v)| (u[c] - v[c]).powi(2))
                    .sum();
                let rms_diff = (sq / steps as f64).sqrt();
                InputAgreement {
                    name,
                    rms_diff,
                    relative: rms_diff / range,
                }
            })
            .collect();
        Self {
            host,
            model,
            reps: rti.len(),
            speedup: b.step_time.mean / a.step_time.mean,
            rti: a,
            sqp: b,
            inputs,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("host.os", self.host.os.into());
        kv("host.arch", self.host.arch.into());
        kv("host.threads", self.host.threads.to_string());
        kv("host.cpu", self.host.cpu.clone());
        kv("host.note", self.host.note.clone());
        kv("model", self.model.into());
        kv("reps", self.reps.to_string());
        for (name, m) in [("rti", &self.rti), ("sqp", &self.sqp)] {
            kv(&format!("{name}.steps"), m.steps.to_string());
            kv(&format!("{name}.step_time.mean_ms"), format!("{:.4}", m.step_time.mean * 1e3));
            kv(&format!("{name}.step_time.median_ms"), format!("{:.4}", m.step_time.median * 1e3));
            kv(&format!("{name}.step_time.p95_ms"), format!("{:.4}", m.step_time.p95 * 1e3));
            kv(&format!("{name}.step_time.max_ms"), format!("{:.4}", m.step_time.max * 1e3));
            kv(&format!("{name}.rms_error"), format!("{:.6}", m.rms_error));
            kv(&format!("{name}.median_sqp_iterations"), m.median_sqp_iterations.to_string());
        }
        kv("speedup", format!("{:.3}", self.speedup));
        for i in &self.inputs {
            kv(&format!("input.{}.rms_diff", i.name), format!("{:.6e}", i.rms_diff));
            kv(&format!("input.{}.rms_diff_relative", i.name), format!("{:.6e}", i.relative));
        }
        s
    }
}
