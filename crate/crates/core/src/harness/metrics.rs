use serde::{Deserialize, Serialize};

use super::TrialReport;

/// Bumped whenever a field of the JSON summary changes meaning.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Root-mean-square difference over paired entries.
pub fn rmse(estimates: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(estimates.len(), truth.len(), "rmse needs paired samples");
    if estimates.is_empty() {
        return f64::NAN;
    }
    let sum: f64 = estimates.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum();
    (sum / estimates.len() as f64).sqrt()
}

/// Estimate/truth pairs over associated detections. Missed targets are not
/// included; ranges only where a pair was matched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSamples {
    pub angle_deg: (Vec<f64>, Vec<f64>),
    pub range: (Vec<f64>, Vec<f64>),
    pub velocity: (Vec<f64>, Vec<f64>),
}

impl ErrorSamples {
    pub fn add_report(&mut self, report: &TrialReport) {
        for (t, a) in report.truth.iter().zip(&report.assigned) {
            let Some(e) = a else { continue };
            let est = &report.estimates[*e];
            self.angle_deg.0.push(est.angle.to_degrees());
            self.angle_deg.1.push(t.angle.to_degrees());
            if let Some(r) = est.range {
                self.range.0.push(r);
                self.range.1.push(t.range);
            }
            self.velocity.0.push(est.velocity);
            self.velocity.1.push(t.radial_velocity);
        }
    }

    pub fn rmse_angle_deg(&self) -> f64 {
        rmse(&self.angle_deg.0, &self.angle_deg.1)
    }

    pub fn rmse_range(&self) -> f64 {
        rmse(&self.range.0, &self.range.1)
    }

    pub fn rmse_velocity(&self) -> f64 {
        rmse(&self.velocity.0, &self.velocity.1)
    }
}

/// Aggregate over the trials of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub value: f64,
    pub trials: usize,
    pub targets: usize,
    pub detected: usize,
    pub p_d: f64,
    pub false_alarms: usize,
    pub rmse_theta_deg: f64,
    pub rmse_r_m: f64,
    pub rmse_v_mps: f64,
    pub ber: Option<f64>,
    /// Mean wall-clock time per trial; not part of the CSV so reruns compare
    /// byte for byte.
    pub runtime_ms: f64,
}

impl PointMetrics {
    pub fn from_reports(value: f64, reports: &[(TrialReport, f64)]) -> Self {
        let mut samples = ErrorSamples::default();
        let (mut targets, mut detected, mut false_alarms, mut time) = (0, 0, 0, 0.0);
        for (r, ms) in reports {
            samples.add_report(r);
            targets += r.truth.len();
            detected += r.detected();
            false_alarms += r.false_alarms;
            time += ms;
        }
        Self {
            value,
            trials: reports.len(),
            targets,
            detected,
            p_d: if targets == 0 { f64::NAN } else { detected as f64 / targets as f64 },
            false_alarms,
            rmse_theta_deg: samples.rmse_angle_deg(),
            rmse_r_m: samples.rmse_range(),
            rmse_v_mps: samples.rmse_velocity(),
            ber: None,
            runtime_ms: if reports.is_empty() { 0.0 } else { time / reports.len() as f64 },
        }
    }

    pub const CSV_HEADER: &'static str =
        "value,trials,targets,detected,p_d,false_alarms,rmse_theta_deg,rmse_r_m,rmse_v_mps,ber";

    pub fn csv_row(&self) -> String {
        let ber = self.ber.map_or(String::new(), |b| format!("{b:.6e}"));
        format!(
            "{},{},{},{},{:.6},{},{:.6e},{:.6e},{:.6e},{}",
            self.value,
            self.trials,
            self.targets,
            self.detected,
            self.p_d,
            self.false_alarms,
            self.rmse_theta_deg,
            self.rmse_r_m,
            self.rmse_v_mps,
            ber
        )
    }
}

/// JSON summary of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub sweep: super::SweepVariable,
    pub master_seed: u64,
    pub points: Vec<PointMetrics>,
    /// Set when the sweep stopped early; `points` holds what finished.
    pub error: Option<String>,
}
