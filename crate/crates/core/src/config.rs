//! JSON scenario files. Angles are in degrees, SINR thresholds and SNR in
//! dB; everything is converted to radians and linear units here.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{clutter_rcs_for_margin, AmplitudeLaw, ChannelOptions, RcsModel};
use crate::commlink::Modulation;
use crate::detect::{AngleRefinement, CfarParams};
use crate::error::{IsacError, Result};
use crate::scenario::{build_clutter_map, default_slot_count, ClutterMap, Scene, SystemConfig, TargetSpec, UserSpec};
use crate::SPEED_OF_LIGHT;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub n_tx: usize,
    pub n_rx: usize,
    pub f0_hz: f64,
    /// Element spacing; half a wavelength at `f0` when absent.
    pub spacing_m: Option<f64>,
    pub delta_f_hz: f64,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// Two slots per beam-space resolution cell when absent.
    pub n_slots: Option<usize>,
    pub tx_power_w: f64,
    pub noise_var_sense: f64,
    pub noise_var_user: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub r_min_m: f64,
    pub r_max_m: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            n_tx: 32,
            n_rx: 32,
            f0_hz: 220e9,
            spacing_m: None,
            delta_f_hz: 500e3,
            n_subcarriers: 64,
            n_symbols: 64,
            n_slots: None,
            tx_power_w: 1.0,
            noise_var_sense: 1.0,
            noise_var_user: 1.0,
            theta_min_deg: -60.0,
            theta_max_deg: 60.0,
            r_min_m: 20.0,
            r_max_m: 250.0,
        }
    }
}

impl SystemSection {
    pub fn build(&self) -> Result<SystemConfig> {
        let spacing = self.spacing_m.unwrap_or(SPEED_OF_LIGHT / self.f0_hz / 2.0);
        let theta_min = self.theta_min_deg.to_radians();
        let theta_max = self.theta_max_deg.to_radians();
        let config = SystemConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            spacing,
            f0: self.f0_hz,
            delta_f: self.delta_f_hz,
            n_subcarriers: self.n_subcarriers,
            n_symbols: self.n_symbols,
            n_slots: self
                .n_slots
                .unwrap_or_else(|| default_slot_count(self.n_tx, spacing, self.f0_hz, theta_min, theta_max)),
            tx_power: self.tx_power_w,
            noise_var_sense: self.noise_var_sense,
            noise_var_user: self.noise_var_user,
            theta_min,
            theta_max,
            r_min: self.r_min_m,
            r_max: self.r_max_m,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    pub range_m: f64,
    pub angle_deg: f64,
    pub sinr_min_db: f64,
    #[serde(default)]
    pub noise_var: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub range_m: f64,
    pub angle_deg: f64,
    pub velocity_mps: f64,
    #[serde(default = "one")]
    pub mean_rcs_m2: f64,
}

fn one() -> f64 {
    1.0
}

/// Targets drawn afresh in every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomTargets {
    pub count: usize,
    /// Mean cross section of a target at 100 m.
    pub mean_rcs_m2: f64,
    /// Scale each cross section with range so all targets return the same
    /// mean echo amplitude.
    pub equal_amplitude: bool,
    /// Smallest speed, in velocity resolution cells.
    pub min_speed_cells: f64,
    /// Minimum separation between targets, in angle resolution cells or
    /// Doppler bins.
    pub min_separation_cells: f64,
}

impl Default for RandomTargets {
    fn default() -> Self {
        Self { count: 1, mean_rcs_m2: 1.0, equal_amplitude: true, min_speed_cells: 2.0, min_separation_cells: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterSection {
    pub enabled: bool,
    /// Per-unit mean cross section; derived from `margin_db` when absent.
    pub mean_rcs_m2: Option<f64>,
    /// Mean total clutter echo power over the strongest target echo.
    pub margin_db: f64,
}

impl Default for ClutterSection {
    fn default() -> Self {
        Self { enabled: true, mean_rcs_m2: None, margin_db: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingSection {
    /// Per-sample echo SNR of the strongest target; when absent the
    /// sensing noise variance from the system section is used as is.
    pub snr_db: Option<f64>,
    pub rcs_model: RcsModel,
    pub amplitude_law: AmplitudeLaw,
    pub comm_modulation: Modulation,
}

impl Default for SensingSection {
    fn default() -> Self {
        Self {
            snr_db: None,
            rcs_model: RcsModel::SwerlingI,
            amplitude_law: AmplitudeLaw::Linear,
            comm_modulation: Modulation::Qam16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    pub guard: usize,
    pub reference: usize,
    pub pfa: f64,
    pub floor_db: Option<f64>,
    pub ct_fraction: f64,
    pub angle_refinement: AngleRefinement,
}

impl Default for DetectionSection {
    fn default() -> Self {
        let c = CfarParams::default();
        Self {
            guard: c.guard,
            reference: c.reference,
            pfa: c.pfa,
            floor_db: c.floor_db,
            ct_fraction: DetectionOptions::default().ct_fraction,
            angle_refinement: AngleRefinement::default(),
        }
    }
}

/// Top-level scenario file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub system: SystemSection,
    pub users: Vec<UserEntry>,
    pub targets: Vec<TargetEntry>,
    pub random_targets: Option<RandomTargets>,
    pub clutter: ClutterSection,
    pub sensing: SensingSection,
    pub detection: DetectionSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionOptions {
    pub cfar: CfarParams,
    pub ct_fraction: f64,
    pub angle_refinement: AngleRefinement,
}

impl Default for DetectionOptions {
    fn default() -> Self {
        Self { cfar: CfarParams::default(), ct_fraction: 0.5, angle_refinement: AngleRefinement::BeamFit }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SensingOptions {
    pub snr_db: Option<f64>,
    pub channel: ChannelOptions,
    pub comm_modulation: Modulation,
}

/// Everything one trial needs, in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSetup {
    pub config: SystemConfig,
    pub scene: Scene,
    pub random_targets: Option<RandomTargets>,
    pub sensing: SensingOptions,
    pub detection: DetectionOptions,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn build(&self) -> Result<TrialSetup> {
        let config = self.system.build()?;
        let users: Vec<UserSpec> = self
            .users
            .iter()
            .map(|u| UserSpec {
                range: u.range_m,
                angle: u.angle_deg.to_radians(),
                sinr_min: db_to_linear(u.sinr_min_db),
                noise_var: u.noise_var,
            })
            .collect();
        let targets: Vec<TargetSpec> = self
            .targets
            .iter()
            .map(|t| TargetSpec::new(t.range_m, t.angle_deg.to_radians(), t.velocity_mps, t.mean_rcs_m2))
            .collect();
        let law = self.sensing.amplitude_law;
        let clutter = if self.clutter.enabled {
            let map = build_clutter_map(&config, 1.0)?;
            let sigma0 = match self.clutter.mean_rcs_m2 {
                Some(v) => v,
                None => {
                    let mut reference = targets.clone();
                    if let Some(r) = &self.random_targets {
                        // strongest possible random target sits at the near edge
                        reference.push(TargetSpec::new(config.r_min, 0.0, 0.0, random_target_rcs(r, config.r_min, law)));
                    }
                    let ranges: Vec<f64> = map.units.iter().map(|u| u.range).collect();
                    clutter_rcs_for_margin(&reference, &ranges, self.clutter.margin_db, law)
                }
            };
            if !(sigma0 > 0.0) {
                return Err(IsacError::InvalidConfig("clutter cross section must be positive".into()));
            }
            map.with_mean_rcs(sigma0)
        } else {
            ClutterMap::default()
        };
        let scene = Scene { users, targets, clutter };
        scene.validate(&config)?;
        let d = &self.detection;
        let detection = DetectionOptions {
            cfar: CfarParams { guard: d.guard, reference: d.reference, pfa: d.pfa, floor_db: d.floor_db },
            ct_fraction: d.ct_fraction,
            angle_refinement: d.angle_refinement,
        };
        detection.cfar.validate()?;
        if !(d.ct_fraction > 0.0 && d.ct_fraction <= 1.0) {
            return Err(IsacError::InvalidConfig(format!("ct_fraction {} outside (0, 1]", d.ct_fraction)));
        }
        Ok(TrialSetup {
            config,
            scene,
            random_targets: self.random_targets.clone(),
            sensing: SensingOptions {
                snr_db: self.sensing.snr_db,
                channel: ChannelOptions { rcs_model: self.sensing.rcs_model, amplitude_law: law },
                comm_modulation: self.sensing.comm_modulation,
            },
            detection,
        })
    }
}

/// Mean cross section of a random target at `range`.
pub fn random_target_rcs(spec: &RandomTargets, range: f64, law: AmplitudeLaw) -> f64 {
    if !spec.equal_amplitude {
        return spec.mean_rcs_m2;
    }
    let ratio = range / 100.0;
    match law {
        AmplitudeLaw::Linear => spec.mean_rcs_m2 * ratio * ratio,
        AmplitudeLaw::Sqrt => spec.mean_rcs_m2 * ratio.powi(4),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build() {
        let s = ScenarioFile::default().build().unwrap();
        assert_eq!(s.config.n_tx, 32);
        assert!(!s.scene.clutter.is_empty());
    }

    #[test]
    fn degrees_and_db_are_converted() {
        let text = r#"{
            "system": {"n_tx": 16, "n_rx": 16, "n_subcarriers": 16, "n_symbols": 16},
            "users": [{"range_m": 60, "angle_deg": 30, "sinr_min_db": 20}],
            "targets": [{"range_m": 90, "angle_deg": -10, "velocity_mps": 15}],
            "clutter": {"enabled": false},
            "sensing": {"snr_db": 5, "rcs_model": "fixed", "amplitude_law": "sqrt", "comm_modulation": "qpsk"},
            "detection": {"pfa": 1e-3, "angle_refinement": "parabolic"}
        }"#;
        let s = ScenarioFile::from_json(text).unwrap().build().unwrap();
        assert!((s.scene.users[0].angle - 30f64.to_radians()).abs() < 1e-15);
        assert!((s.scene.users[0].sinr_min - 100.0).abs() < 1e-9);
        assert!((s.scene.targets[0].angle + 10f64.to_radians()).abs() < 1e-15);
        assert_eq!(s.sensing.channel.rcs_model, RcsModel::Fixed);
        assert_eq!(s.sensing.comm_modulation, Modulation::Qpsk);
        assert_eq!(s.detection.angle_refinement, AngleRefinement::Parabolic);
        assert!(s.scene.clutter.is_empty());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ScenarioFile::from_json(r#"{"sytem": {}}"#).is_err());
    }

    #[test]
    fn round_trip_json() {
        let f = ScenarioFile::default();
        assert_eq!(ScenarioFile::from_json(&f.to_json().unwrap()).unwrap(), f);
    }

    #[test]
    fn bad_spacing_is_rejected() {
        let mut f = ScenarioFile::default();
        f.system.spacing_m = Some(0.01);
        assert!(f.build().is_err());
    }
}
