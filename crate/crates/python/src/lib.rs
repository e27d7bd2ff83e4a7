//! Python bindings for the ISAC simulator.
//!
//! ```python
//! import isac
//! sc = isac.Scenario.load("configs/fig8.json")
//! report = sc.run(seed=7)
//! for slot in sc.allocation():
//!     print(slot.sector, slot.rho_s, slot.esp)
//! ```

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;

use isac_core::arrayfield::{self, PowerAllocation};
use isac_core::commlink::{self, Modulation};
use isac_core::config::ScenarioFile;
use isac_core::harness::{self, ExperimentSpec, Profile, Trial};
use isac_core::powalloc::{PlanStatus, SlotPlan};
use isac_core::IsacError;

fn to_py(e: IsacError) -> PyErr {
    match e {
        IsacError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Solved power split of one scan slot.
#[pyclass(name = "SlotPlan", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PySlotPlan {
    slot: usize,
    angle_deg: f64,
    /// "S4S" or "C4S(p)" with a 1-based user index.
    sector: String,
    rho_s: f64,
    rho_c: Vec<f64>,
    /// Equivalent sensing power toward the slot angle, watts.
    esp: f64,
    sinr_db: Vec<f64>,
    best_effort: bool,
}

impl From<&SlotPlan> for PySlotPlan {
    fn from(p: &SlotPlan) -> Self {
        Self {
            slot: p.slot,
            angle_deg: p.angle.to_degrees(),
            sector: p.sector.to_string(),
            rho_s: p.alloc.rho_s,
            rho_c: p.alloc.rho_c.clone(),
            esp: p.esp,
            sinr_db: p.sinr.iter().map(|s| 10.0 * s.log10()).collect(),
            best_effort: p.status == PlanStatus::BestEffort,
        }
    }
}

#[pymethods]
impl PySlotPlan {
    fn __repr__(&self) -> String {
        format!(
            "SlotPlan(slot={}, angle_deg={:.3}, sector={}, rho_s={:.4}, esp={:.4e})",
            self.slot, self.angle_deg, self.sector, self.rho_s, self.esp
        )
    }
}

/// A prepared scenario. The scan schedule and slot allocations are solved on
/// construction; `run` then simulates one trial per seed.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    file: ScenarioFile,
    trial: Trial,
}

impl PyScenario {
    fn build(file: ScenarioFile) -> PyResult<Self> {
        let trial = Trial::new(file.build().map_err(to_py)?).map_err(to_py)?;
        Ok(Self { file, trial })
    }

    fn alloc(&self, rho_s: f64, rho_c: Vec<f64>) -> PyResult<PowerAllocation> {
        let users = &self.trial.setup.scene.users;
        if rho_c.len() != users.len() {
            return Err(PyValueError::new_err(format!("expected {} comm shares, got {}", users.len(), rho_c.len())));
        }
        PowerAllocation::new(rho_s, rho_c).map_err(to_py)
    }
}

#[pymethods]
impl PyScenario {
    /// Parses a scenario from a JSON string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::build(ScenarioFile::from_json(text).map_err(to_py)?)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::build(ScenarioFile::load(&path).map_err(to_py)?)
    }

    /// Same scenario with the array size and slot count of a preset
    /// (`"ci"` or `"paper"`).
    fn with_profile(&self, profile: &str) -> PyResult<Self> {
        let p = match profile {
            "ci" => Profile::Ci,
            "paper" => Profile::Paper,
            other => return Err(PyValueError::new_err(format!("unknown profile {other:?}"))),
        };
        let mut file = self.file.clone();
        harness::apply_profile(&mut file, p);
        Self::build(file)
    }

    fn to_json(&self) -> PyResult<String> {
        self.file.to_json().map_err(to_py)
    }

    #[getter]
    fn n_tx(&self) -> usize {
        self.trial.setup.config.n_tx
    }

    #[getter]
    fn n_rx(&self) -> usize {
        self.trial.setup.config.n_rx
    }

    #[getter]
    fn n_subcarriers(&self) -> usize {
        self.trial.setup.config.n_subcarriers
    }

    #[getter]
    fn n_symbols(&self) -> usize {
        self.trial.setup.config.n_symbols
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.trial.setup.scene.users.len()
    }

    #[getter]
    fn slot_angles_deg(&self) -> Vec<f64> {
        self.trial.schedule.angles.iter().map(|a| a.to_degrees()).collect()
    }

    #[getter]
    fn range_resolution(&self) -> f64 {
        self.trial.setup.config.range_resolution()
    }

    #[getter]
    fn velocity_resolution(&self) -> f64 {
        self.trial.setup.config.velocity_resolution()
    }

    fn allocation(&self) -> Vec<PySlotPlan> {
        self.trial.plans.iter().map(PySlotPlan::from).collect()
    }

    /// Runs one trial and returns the report as a dict with `truth`,
    /// `estimates`, `assigned` and `false_alarms`.
    fn run(&self, py: Python<'_>, seed: u64) -> PyResult<Py<PyAny>> {
        let report = py.detach(|| self.trial.run(seed)).map_err(to_py)?;
        json_to_py(py, &to_json(&report)?)
    }

    /// Number of truth targets detected in each seeded trial.
    fn detections(&self, py: Python<'_>, seeds: Vec<u64>) -> PyResult<Vec<usize>> {
        let reports = py.detach(|| harness::run_trials(&self.trial, &seeds)).map_err(to_py)?;
        Ok(reports.iter().map(|(r, _)| r.detected()).collect())
    }

    /// Equivalent sensing power of an arbitrary split toward `slot_angle_deg`.
    fn esp(&self, rho_s: f64, rho_c: Vec<f64>, slot_angle_deg: f64) -> PyResult<f64> {
        let a = self.alloc(rho_s, rho_c)?;
        Ok(arrayfield::esp(&a, slot_angle_deg.to_radians(), &self.trial.setup.scene.users, &self.trial.setup.config))
    }

    /// Linear SINR of `user` under an arbitrary split.
    fn user_sinr(&self, user: usize, rho_s: f64, rho_c: Vec<f64>, slot_angle_deg: f64) -> PyResult<f64> {
        let a = self.alloc(rho_s, rho_c)?;
        let users = &self.trial.setup.scene.users;
        if user >= users.len() {
            return Err(PyIndexError::new_err(format!("user {user} out of range")));
        }
        Ok(arrayfield::user_sinr(user, &a, users, slot_angle_deg.to_radians(), &self.trial.setup.config))
    }

    /// Transmit array power gain between two directions.
    fn array_gain(&self, theta1_deg: f64, theta2_deg: f64) -> f64 {
        let c = &self.trial.setup.config;
        arrayfield::array_gain(theta1_deg.to_radians(), theta2_deg.to_radians(), c.n_tx, c)
    }

    /// 16-QAM bit error rate over a full scan at each per-user SINR floor.
    #[pyo3(signature = (sinr_db, min_bits=100_000, seed=0))]
    fn ber_sweep(&self, py: Python<'_>, sinr_db: Vec<f64>, min_bits: u64, seed: u64) -> PyResult<Py<PyAny>> {
        let setup = &self.trial.setup;
        let points = py
            .detach(|| commlink::ber_sweep(&setup.config, &setup.scene.users, &sinr_db, min_bits, Modulation::Qam16, seed))
            .map_err(to_py)?;
        json_to_py(py, &to_json(&points)?)
    }

    fn __repr__(&self) -> String {
        let c = &self.trial.setup.config;
        format!(
            "Scenario(n_tx={}, n_rx={}, slots={}, users={}, targets={})",
            c.n_tx,
            c.n_rx,
            self.trial.plans.len(),
            self.trial.setup.scene.users.len(),
            self.trial.setup.scene.targets.len()
        )
    }
}

/// Runs the sweep described by an experiment file and writes `sweep.csv`
/// and `summary.json` into `out_dir`. Returns the summary as a dict.
#[pyfunction]
#[pyo3(signature = (experiment, out_dir, trials=None, seed=None))]
fn run_sweep(py: Python<'_>, experiment: PathBuf, out_dir: PathBuf, trials: Option<usize>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let mut spec = ExperimentSpec::load(&experiment).map_err(to_py)?;
    if let Some(s) = seed {
        spec.master_seed = s;
    }
    let base = spec.scenario().map_err(to_py)?;
    let trials = trials.or(spec.trials).unwrap_or(Profile::default().trials());
    let report = py.detach(|| harness::run_sweep(&spec, &base, trials, &out_dir)).map_err(to_py)?;
    json_to_py(py, &to_json(&report)?)
}

/// Approximate 16-QAM bit error rate at a given Es/N0 in dB.
#[pyfunction]
fn qam16_ber(es_n0_db: f64) -> f64 {
    commlink::qam16_ber_approx(10f64.powf(es_n0_db / 10.0))
}

#[pymodule]
fn isac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySlotPlan>()?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(qam16_ber, m)?)?;
    Ok(())
}
