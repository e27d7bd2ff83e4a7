//! System configuration, scene geometry, the sensing scan schedule and the
//! static clutter grid.
//!
//! Angles are radians and distances meters everywhere in this module; the
//! JSON loader in [`crate::config`] converts from degrees and dB.

use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::SPEED_OF_LIGHT;

/// Physical constants and array/waveform dimensions of the base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antenna count.
    pub n_tx: usize,
    /// Receive antenna count.
    pub n_rx: usize,
    /// Element spacing in meters.
    pub spacing: f64,
    /// Lowest carrier frequency in Hz.
    pub f0: f64,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// Number of scan slots.
    pub n_slots: usize,
    /// Total transmit power in watts.
    pub tx_power: f64,
    /// Per-sample noise variance at the sensing receiver.
    pub noise_var_sense: f64,
    /// Default per-sample noise variance at the user terminals.
    pub noise_var_user: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl SystemConfig {
    /// Half-wavelength array at `f0` scanning `[-60°, 60°]` with the
    /// default slot density.
    pub fn half_wavelength(n_tx: usize, n_rx: usize, f0: f64, delta_f: f64, m: usize, n: usize) -> Self {
        let theta_max = 60f64.to_radians();
        let spacing = SPEED_OF_LIGHT / f0 / 2.0;
        Self {
            n_tx,
            n_rx,
            spacing,
            f0,
            delta_f,
            n_subcarriers: m,
            n_symbols: n,
            n_slots: default_slot_count(n_tx, spacing, f0, -theta_max, theta_max),
            tx_power: 1.0,
            noise_var_sense: 1.0,
            noise_var_user: 1.0,
            theta_min: -theta_max,
            theta_max,
            r_min: 20.0,
            r_max: 250.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(IsacError::InvalidConfig(msg.to_string()));
        if self.n_tx == 0 || self.n_rx == 0 {
            return bad("antenna counts must be positive");
        }
        if !(self.f0 > 0.0 && self.delta_f > 0.0) {
            return bad("carrier and subcarrier spacing must be positive");
        }
        if !(self.spacing > 0.0) || self.spacing > self.wavelength() / 2.0 * (1.0 + 1e-12) {
            return bad("element spacing must satisfy 0 < d <= lambda/2");
        }
        if self.n_subcarriers < 2 || self.n_symbols < 2 || self.n_slots < 2 {
            return bad("M, N and Q must all be at least 2");
        }
        if !(self.theta_min < self.theta_max) {
            return bad("theta_min must be below theta_max");
        }
        if self.theta_min <= -std::f64::consts::FRAC_PI_2 || self.theta_max >= std::f64::consts::FRAC_PI_2 {
            return bad("scan bounds must lie strictly inside (-90°, 90°)");
        }
        if !(self.tx_power > 0.0 && self.noise_var_sense >= 0.0 && self.noise_var_user >= 0.0) {
            return bad("transmit power must be positive and noise variances nonnegative");
        }
        if !(self.r_min >= 0.0 && self.r_min <= self.r_max) {
            return bad("range bounds must satisfy 0 <= r_min <= r_max");
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f0
    }

    /// OFDM symbol duration `1/Δf`.
    pub fn symbol_time(&self) -> f64 {
        1.0 / self.delta_f
    }

    pub fn subcarrier_freq(&self, m: usize) -> f64 {
        self.f0 + m as f64 * self.delta_f
    }

    pub fn bandwidth(&self) -> f64 {
        (self.n_subcarriers - 1) as f64 * self.delta_f
    }

    /// `c / (2 (M-1) Δf)`
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth())
    }

    /// `c / (2 f0 N T_s)`
    pub fn velocity_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.f0 * self.n_symbols as f64 * self.symbol_time())
    }

    /// Angular resolution `≈ 2/N_T` in radians at broadside.
    pub fn angle_resolution(&self) -> f64 {
        2.0 / self.n_tx as f64
    }

    /// Beam-space cell size `λ/(N_T d)`, equal to `2/N_T` for half-wavelength arrays.
    pub fn sine_resolution(&self) -> f64 {
        self.wavelength() / (self.n_tx as f64 * self.spacing)
    }

    pub fn max_unambiguous_range(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.delta_f)
    }

    /// `c / (4 f0 T_s)`
    pub fn max_unambiguous_velocity(&self) -> f64 {
        SPEED_OF_LIGHT / (4.0 * self.f0 * self.symbol_time())
    }

    /// Per-symbol Doppler phase increment `4π f0 v T_s / c`.
    pub fn doppler_phase_step(&self, velocity: f64) -> f64 {
        4.0 * std::f64::consts::PI * self.f0 * velocity * self.symbol_time() / SPEED_OF_LIGHT
    }

    /// `π d f0 / c`, the phase scale of the array factor per unit `sin θ`.
    pub(crate) fn array_phase_scale(&self) -> f64 {
        std::f64::consts::PI * self.spacing * self.f0 / SPEED_OF_LIGHT
    }
}

/// Scan slots per beam-space resolution cell. With one slot per cell the
/// neighbouring beams sit on pattern nulls and carry almost no angle
/// information about a target near a slot centre.
pub const SLOTS_PER_CELL: usize = 2;

/// Slot count giving `SLOTS_PER_CELL` slots per beam-space resolution cell.
pub fn default_slot_count(n_tx: usize, spacing: f64, f0: f64, theta_min: f64, theta_max: f64) -> usize {
    let cell = SPEED_OF_LIGHT / f0 / (n_tx as f64 * spacing);
    let span = theta_max.sin() - theta_min.sin();
    ((SLOTS_PER_CELL as f64 * span / cell).ceil() as usize + 1).max(2)
}

/// A communications user at a known, fixed position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub range: f64,
    pub angle: f64,
    /// Minimum SINR, linear.
    pub sinr_min: f64,
    /// Overrides [`SystemConfig::noise_var_user`] when set.
    #[serde(default)]
    pub noise_var: Option<f64>,
}

impl UserSpec {
    pub fn new(range: f64, angle: f64, sinr_min: f64) -> Self {
        Self { range, angle, sinr_min, noise_var: None }
    }

    /// Free-space amplitude fading `λ / (4π R)`.
    pub fn fading(&self, config: &SystemConfig) -> f64 {
        config.wavelength() / (4.0 * std::f64::consts::PI * self.range)
    }

    pub fn noise_var(&self, config: &SystemConfig) -> f64 {
        self.noise_var.unwrap_or(config.noise_var_user)
    }
}

/// A moving point target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub range: f64,
    pub angle: f64,
    pub radial_velocity: f64,
    /// Mean radar cross section in m².
    pub mean_rcs: f64,
}

impl TargetSpec {
    pub fn new(range: f64, angle: f64, radial_velocity: f64, mean_rcs: f64) -> Self {
        Self { range, angle, radial_velocity, mean_rcs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterUnit {
    pub range: f64,
    pub angle: f64,
    pub mean_rcs: f64,
}

/// Static ground-clutter scattering units on a range × sin-angle grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClutterMap {
    pub units: Vec<ClutterUnit>,
}

impl ClutterMap {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn with_mean_rcs(mut self, mean_rcs: f64) -> Self {
        for u in &mut self.units {
            u.mean_rcs = mean_rcs;
        }
        self
    }
}

/// Users, moving targets and static clutter seen by the base station.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub users: Vec<UserSpec>,
    pub targets: Vec<TargetSpec>,
    pub clutter: ClutterMap,
}

impl Scene {
    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        let vmax = config.max_unambiguous_velocity();
        for (k, t) in self.targets.iter().enumerate() {
            if t.radial_velocity.abs() >= vmax {
                return Err(IsacError::InvalidConfig(format!(
                    "target {k} velocity {} m/s exceeds the unambiguous limit {vmax:.3} m/s",
                    t.radial_velocity
                )));
            }
            if !(t.mean_rcs > 0.0 && t.range > 0.0) {
                return Err(IsacError::InvalidConfig(format!("target {k} needs positive range and RCS")));
            }
            if t.angle.abs() >= std::f64::consts::FRAC_PI_2 {
                return Err(IsacError::InvalidConfig(format!("target {k} angle outside (-90°, 90°)")));
            }
        }
        for (p, u) in self.users.iter().enumerate() {
            if !(u.sinr_min > 0.0 && u.range > 0.0) {
                return Err(IsacError::InvalidConfig(format!("user {p} needs positive range and SINR threshold")));
            }
            if u.angle < config.theta_min || u.angle > config.theta_max {
                return Err(IsacError::InvalidConfig(format!("user {p} lies outside the service sector")));
            }
        }
        sector_bounds(&self.users, config)?;
        Ok(())
    }
}

/// Sensing scan angles `Θ_1 … Θ_Q`, uniform in `sin θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSchedule {
    pub angles: Vec<f64>,
}

impl ScanSchedule {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Spacing of the schedule in `sin θ`.
    pub fn sine_step(&self) -> f64 {
        let n = self.angles.len();
        (self.angles[n - 1].sin() - self.angles[0].sin()) / (n - 1) as f64
    }

    /// Slot whose angle is closest to `theta` in `sin θ`.
    pub fn nearest_slot(&self, theta: f64) -> usize {
        let s0 = self.angles[0].sin();
        let idx = ((theta.sin() - s0) / self.sine_step()).round();
        idx.clamp(0.0, (self.angles.len() - 1) as f64) as usize
    }
}

pub fn build_scan_schedule(config: &SystemConfig) -> ScanSchedule {
    let q = config.n_slots;
    assert!(q >= 2, "scan schedule needs at least two slots");
    let s_min = config.theta_min.sin();
    let s_max = config.theta_max.sin();
    let step = (s_max - s_min) / (q - 1) as f64;
    let mut angles: Vec<f64> = (0..q).map(|i| (s_min + i as f64 * step).clamp(-1.0, 1.0).asin()).collect();
    // pin the endpoints against rounding in sin/asin
    angles[0] = config.theta_min;
    angles[q - 1] = config.theta_max;
    ScanSchedule { angles }
}

/// Grid of clutter units covering the service area with one unit per
/// range cell and per beam-space cell. Units sit at cell centres.
pub fn build_clutter_map(config: &SystemConfig, mean_rcs: f64) -> Result<ClutterMap> {
    let dr = config.range_resolution();
    let ds = config.sine_resolution();
    let r_span = config.r_max - config.r_min;
    let s_min = config.theta_min.sin();
    let s_span = config.theta_max.sin() - s_min;
    if !(r_span > 0.0) || !(s_span > 0.0) {
        return Err(IsacError::EmptyArea(format!(
            "range span {r_span} m, sine span {s_span}"
        )));
    }
    let n_r = (r_span / dr - 1e-9).ceil().max(1.0) as usize;
    let n_s = (s_span / ds - 1e-9).ceil().max(1.0) as usize;
    let mut units = Vec::with_capacity(n_r * n_s);
    for j in 0..n_s {
        let s = (s_min + (j as f64 + 0.5) * ds).min(config.theta_max.sin());
        let angle = s.asin();
        for i in 0..n_r {
            let range = (config.r_min + (i as f64 + 0.5) * dr).min(config.r_max);
            units.push(ClutterUnit { range, angle, mean_rcs });
        }
    }
    Ok(ClutterMap { units })
}

/// Which beam illuminates a scan direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectorClass {
    /// Dedicated sensing beam.
    S4S,
    /// Communications beam of the given user doubles as the illuminator.
    C4S(usize),
}

impl std::fmt::Display for SectorClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SectorClass::S4S => write!(f, "S4S"),
            SectorClass::C4S(p) => write!(f, "C4S({})", p + 1),
        }
    }
}

/// Half-power beamwidth `0.88 λ / (N_T d cos ϑ)` of a beam steered to `angle`.
pub fn half_power_beamwidth(angle: f64, config: &SystemConfig) -> f64 {
    0.88 * config.wavelength() / (config.n_tx as f64 * config.spacing * angle.cos())
}

/// Protective sector `[ϑ_p - ϑ_3dB/2, ϑ_p + ϑ_3dB/2]` of every user.
pub fn sector_bounds(users: &[UserSpec], config: &SystemConfig) -> Result<Vec<(f64, f64)>> {
    let bounds: Vec<(f64, f64)> = users
        .iter()
        .map(|u| {
            let half = half_power_beamwidth(u.angle, config) / 2.0;
            (u.angle - half, u.angle + half)
        })
        .collect();
    for a in 0..bounds.len() {
        for b in a + 1..bounds.len() {
            if bounds[a].0 <= bounds[b].1 && bounds[b].0 <= bounds[a].1 {
                return Err(IsacError::OverlappingSectors(a, b));
            }
        }
    }
    Ok(bounds)
}

pub fn classify_sector(theta: f64, users: &[UserSpec], config: &SystemConfig) -> Result<SectorClass> {
    let bounds = sector_bounds(users, config)?;
    Ok(classify_with_bounds(theta, &bounds))
}

pub(crate) fn classify_with_bounds(theta: f64, bounds: &[(f64, f64)]) -> SectorClass {
    bounds
        .iter()
        .position(|&(lo, hi)| theta >= lo && theta <= hi)
        .map_or(SectorClass::S4S, SectorClass::C4S)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn config(n_tx: usize, q: usize) -> SystemConfig {
        let mut c = SystemConfig::half_wavelength(n_tx, n_tx, 220e9, 5e5, 128, 64);
        c.n_slots = q;
        c
    }

    #[test]
    fn schedule_endpoints_and_symmetry() {
        let c = config(32, 3);
        let s = build_scan_schedule(&c);
        assert_eq!(s.angles[0], c.theta_min);
        assert_eq!(s.angles[2], c.theta_max);
        assert_abs_diff_eq!(s.angles[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn schedule_is_uniform_in_sine() {
        let c = config(64, 57);
        let s = build_scan_schedule(&c);
        let step = s.sine_step();
        for w in s.angles.windows(2) {
            assert!(w[1] > w[0]);
            assert_abs_diff_eq!(w[1].sin() - w[0].sin(), step, epsilon = 1e-12);
        }
    }

    #[test]
    fn resolutions() {
        let c = config(128, 10);
        assert_abs_diff_eq!(c.range_resolution(), 3e8 / (2.0 * 127.0 * 5e5), epsilon = 1e-12);
        assert_abs_diff_eq!(c.range_resolution(), 2.36, epsilon = 5e-3);
        assert_abs_diff_eq!(c.angle_resolution().to_degrees(), 0.895, epsilon = 1e-3);
    }

    #[test]
    fn single_cell_clutter_map() {
        let mut c = config(32, 10);
        let dr = c.range_resolution();
        c.r_min = 50.0;
        c.r_max = 50.0 + dr;
        let ds = c.sine_resolution();
        c.theta_min = 0.0;
        c.theta_max = ds.asin();
        let map = build_clutter_map(&c, 1.0).unwrap();
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn clutter_cell_count_matches_grid() {
        let c = config(32, 10);
        let map = build_clutter_map(&c, 2.0).unwrap();
        let n_r = ((c.r_max - c.r_min) / c.range_resolution()).ceil() as usize;
        let n_s = ((c.theta_max.sin() - c.theta_min.sin()) / c.sine_resolution()).ceil() as usize;
        assert_eq!(map.len(), n_r * n_s);
        assert!(map.units.iter().all(|u| u.mean_rcs == 2.0));
    }

    #[test]
    fn degenerate_area_is_rejected() {
        let mut c = config(32, 10);
        c.r_max = c.r_min;
        assert!(matches!(build_clutter_map(&c, 1.0), Err(IsacError::EmptyArea(_))));
    }

    #[test]
    fn paper_sector_bounds_for_user_at_30_degrees() {
        let c = config(128, 10);
        let users = [UserSpec::new(60.0, 30f64.to_radians(), 100.0)];
        let b = sector_bounds(&users, &c).unwrap();
        assert_abs_diff_eq!(b[0].0.to_degrees(), 29.5452, epsilon = 1e-4);
        assert_abs_diff_eq!(b[0].1.to_degrees(), 30.4548, epsilon = 1e-4);
        assert_eq!(classify_sector(users[0].angle, &users, &c).unwrap(), SectorClass::C4S(0));
    }

    #[test]
    fn sensing_sector_at_25_degrees() {
        let c = config(128, 10);
        let users: Vec<UserSpec> = [-40.0f64, -10.0, 30.0]
            .iter()
            .map(|a| UserSpec::new(60.0, a.to_radians(), 100.0))
            .collect();
        assert_eq!(classify_sector(25f64.to_radians(), &users, &c).unwrap(), SectorClass::S4S);
        assert_eq!(classify_sector((-10f64).to_radians(), &users, &c).unwrap(), SectorClass::C4S(1));
    }

    #[test]
    fn overlapping_sectors_are_an_error() {
        let c = config(16, 10);
        let users = [UserSpec::new(60.0, 0.0, 10.0), UserSpec::new(60.0, 0.01, 10.0)];
        assert!(matches!(
            classify_sector(0.0, &users, &c),
            Err(IsacError::OverlappingSectors(0, 1))
        ));
    }

    #[test]
    fn spacing_above_half_wavelength_is_invalid() {
        let mut c = config(16, 10);
        c.spacing *= 1.01;
        assert!(c.validate().is_err());
    }
}
