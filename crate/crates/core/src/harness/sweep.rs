use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{MetricsReport, PointMetrics, METRICS_SCHEMA_VERSION};
use super::{run_trials, Trial};
use crate::commlink::{ber_sweep, write_ber_csv, BerPoint};
use crate::config::ScenarioFile;
use crate::error::{IsacError, Result};
use crate::powalloc::write_allocation_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Echo SNR in dB.
    SnrDb,
    /// Subcarrier count `M`.
    Subcarriers,
    /// Symbols per slot `N`.
    Symbols,
    /// Transmit and receive element count.
    Antennas,
    /// SINR requirement of every user, dB; produces a BER curve.
    SinrDb,
}

/// Where the base scenario comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Path(PathBuf),
    Inline(Box<ScenarioFile>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 32-element arrays, 100 trials per point.
    #[default]
    Ci,
    /// 128-element arrays, 1000 trials per point.
    Paper,
}

impl Profile {
    pub fn antennas(self) -> usize {
        match self {
            Profile::Ci => 32,
            Profile::Paper => 128,
        }
    }

    pub fn trials(self) -> usize {
        match self {
            Profile::Ci => 100,
            Profile::Paper => 1000,
        }
    }
}

/// Sets the array size of `file` for `profile`.
pub fn apply_profile(file: &mut ScenarioFile, profile: Profile) {
    file.system.n_tx = profile.antennas();
    file.system.n_rx = profile.antennas();
    file.system.n_slots = None;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioRef,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    /// Trials per point; the profile default when absent.
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Bits scored per point of a SINR sweep.
    #[serde(default = "default_min_bits")]
    pub min_bits: u64,
}

fn default_min_bits() -> u64 {
    100_000
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        // scenario paths are relative to the experiment file
        if let ScenarioRef::Path(p) = &mut spec.scenario {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    pub fn scenario(&self) -> Result<ScenarioFile> {
        match &self.scenario {
            ScenarioRef::Path(p) => ScenarioFile::load(p),
            ScenarioRef::Inline(f) => Ok((**f).clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == Some(0) {
            return Err(IsacError::InvalidConfig("trials must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(IsacError::InvalidConfig("sweep has no values".into()));
        }
        let up = self.values.windows(2).all(|w| w[1] > w[0]);
        let down = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(IsacError::InvalidConfig("sweep values must be strictly monotone".into()));
        }
        if matches!(self.sweep, SweepVariable::Subcarriers | SweepVariable::Symbols | SweepVariable::Antennas)
            && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0)
        {
            return Err(IsacError::InvalidConfig("dimension sweeps need positive integer values".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at sweep point `point`.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    mix(mix(mix(master) ^ point as u64) ^ trial as u64)
}

/// `base` with the sweep variable set to `value`.
pub fn point_scenario(base: &ScenarioFile, variable: SweepVariable, value: f64) -> ScenarioFile {
    let mut f = base.clone();
    match variable {
        SweepVariable::SnrDb => f.sensing.snr_db = Some(value),
        SweepVariable::Subcarriers => f.system.n_subcarriers = value as usize,
        SweepVariable::Symbols => f.system.n_symbols = value as usize,
        SweepVariable::Antennas => {
            f.system.n_tx = value as usize;
            f.system.n_rx = value as usize;
            f.system.n_slots = None;
        }
        SweepVariable::SinrDb => {
            for u in &mut f.users {
                u.sinr_min_db = value;
            }
        }
    }
    f
}

enum PointOutcome {
    Sensing(PointMetrics),
    Ber(BerPoint),
}

fn run_point(spec: &ExperimentSpec, base: &ScenarioFile, trials: usize, i: usize) -> Result<PointOutcome> {
    let value = spec.values[i];
    let file = point_scenario(base, spec.sweep, value);
    let setup = file.build()?;
    if spec.sweep == SweepVariable::SinrDb {
        let users = &setup.scene.users;
        if users.is_empty() {
            return Err(IsacError::InvalidConfig("a SINR sweep needs at least one user".into()));
        }
        let mut points = ber_sweep(
            &setup.config,
            users,
            &[value],
            spec.min_bits,
            setup.sensing.comm_modulation,
            trial_seed(spec.master_seed, i, 0),
        )?;
        return Ok(PointOutcome::Ber(points.remove(0)));
    }
    let trial = Trial::new(setup)?;
    let seeds: Vec<u64> = (0..trials).map(|t| trial_seed(spec.master_seed, i, t)).collect();
    let reports = run_trials(&trial, &seeds)?;
    Ok(PointOutcome::Sensing(PointMetrics::from_reports(value, &reports)))
}

/// Runs every sweep point and writes `sweep.csv` (or `ber.csv` for SINR
/// sweeps), `summary.json`, and `allocation.csv` when the scene has users.
/// Points run in parallel; output is in point order. When a point fails,
/// the points before it are still written.
pub fn run_sweep(spec: &ExperimentSpec, base: &ScenarioFile, trials: usize, out_dir: &Path) -> Result<MetricsReport> {
    spec.validate()?;
    if trials == 0 {
        return Err(IsacError::InvalidConfig("trials must be at least 1".into()));
    }
    std::fs::create_dir_all(out_dir)?;

    if !base.users.is_empty() {
        let trial = Trial::new(point_scenario(base, spec.sweep, spec.values[0]).build()?)?;
        write_allocation_csv(BufWriter::new(File::create(out_dir.join("allocation.csv"))?), &trial.plans)?;
    }

    let outcomes: Vec<Result<PointOutcome>> =
        (0..spec.values.len()).into_par_iter().map(|i| run_point(spec, base, trials, i)).collect();

    let mut points = Vec::new();
    let mut ber_points = Vec::new();
    let mut failure = None;
    for o in outcomes {
        match o {
            Ok(PointOutcome::Sensing(p)) => points.push(p),
            Ok(PointOutcome::Ber(b)) => {
                points.push(ber_metrics(&b));
                ber_points.push(b);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    if spec.sweep == SweepVariable::SinrDb {
        write_ber_csv(BufWriter::new(File::create(out_dir.join("ber.csv"))?), &ber_points)?;
    } else {
        let mut w = BufWriter::new(File::create(out_dir.join("sweep.csv"))?);
        writeln!(w, "{}", PointMetrics::CSV_HEADER)?;
        for p in &points {
            writeln!(w, "{}", p.csv_row())?;
        }
        w.flush()?;
    }
    let report = MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        sweep: spec.sweep,
        master_seed: spec.master_seed,
        points,
        error: failure.as_ref().map(|e| e.to_string()),
    };
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn ber_metrics(b: &BerPoint) -> PointMetrics {
    PointMetrics {
        value: b.sinr_db,
        trials: 1,
        targets: 0,
        detected: 0,
        p_d: f64::NAN,
        false_alarms: 0,
        rmse_theta_deg: f64::NAN,
        rmse_r_m: f64::NAN,
        rmse_v_mps: f64::NAN,
        ber: Some(b.ber),
        runtime_ms: 0.0,
    }
}
