//! Mixed sensing channel: static clutter units and moving point targets with
//! Swerling-I fluctuating cross sections.
//!
//! Only the scalar part of each scatterer's channel is formed here. The
//! rank-one spatial factor `a_RX(θ) a_TXᴴ(θ)` is carried as the angle and
//! contracted with the beamformers by [`crate::echoes`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::scenario::{Scene, SystemConfig, TargetSpec};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScattererKind {
    Clutter,
    Target,
}

/// How a drawn cross section enters the echo amplitude.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeLaw {
    /// `sqrt(λ² / ((4π)³ r⁴)) · σ`
    #[default]
    Linear,
    /// `sqrt(λ² σ / ((4π)³ r⁴))`, the classical radar equation.
    Sqrt,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RcsModel {
    /// Exponential cross section, drawn once per trial.
    #[default]
    SwerlingI,
    /// Cross section pinned to its mean.
    Fixed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelOptions {
    pub rcs_model: RcsModel,
    pub amplitude_law: AmplitudeLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub kind: ScattererKind,
    /// Real echo amplitude from the radar equation.
    pub amplitude: f64,
    pub angle: f64,
    pub range: f64,
    /// Radial velocity, zero for clutter.
    pub velocity: f64,
}

/// One trial's scatterers. Clutter units come first, then targets in scene order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub scatterers: Vec<Scatterer>,
}

impl ChannelRealization {
    pub fn clutter(&self) -> impl Iterator<Item = &Scatterer> {
        self.scatterers.iter().filter(|s| s.kind == ScattererKind::Clutter)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Scatterer> {
        self.scatterers.iter().filter(|s| s.kind == ScattererKind::Target)
    }
}

/// One exponential cross-section draw with mean `sigma0`.
pub fn draw_rcs<R: Rng + ?Sized>(sigma0: f64, rng: &mut R) -> f64 {
    Exp::new(1.0 / sigma0).expect("mean cross section must be positive").sample(rng)
}

pub fn echo_amplitude(range: f64, rcs: f64, law: AmplitudeLaw, config: &SystemConfig) -> f64 {
    let lambda = config.wavelength();
    let path = lambda * lambda / ((4.0 * PI).powi(3) * range.powi(4));
    match law {
        AmplitudeLaw::Linear => path.sqrt() * rcs,
        AmplitudeLaw::Sqrt => (path * rcs).sqrt(),
    }
}

/// Doppler phasor `exp(j 4π f0 v n T_s / c)` for symbol `n`.
pub fn doppler_phasor(velocity: f64, n: usize, config: &SystemConfig) -> Complex64 {
    Complex64::from_polar(1.0, config.doppler_phase_step(velocity) * n as f64)
}

/// Delay phasor `exp(-j 4π f_m r / c)` for subcarrier `m`.
pub fn range_phasor(range: f64, m: usize, config: &SystemConfig) -> Complex64 {
    // split f_m = f0 + mΔf so the large carrier term is reduced once
    let carrier = (4.0 * PI * config.f0 * range / SPEED_OF_LIGHT).rem_euclid(2.0 * PI);
    let offset = 4.0 * PI * m as f64 * config.delta_f * range / SPEED_OF_LIGHT;
    Complex64::from_polar(1.0, -(carrier + offset))
}

/// Scalar channel coefficient of a scatterer on symbol `n`, subcarrier `m`.
pub fn channel_coeff(s: &Scatterer, n: usize, m: usize, config: &SystemConfig) -> Complex64 {
    let range = range_phasor(s.range, m, config) * s.amplitude;
    if s.velocity == 0.0 {
        range
    } else {
        range * doppler_phasor(s.velocity, n, config)
    }
}

fn draw<R: Rng + ?Sized>(mean: f64, model: RcsModel, rng: &mut R) -> f64 {
    match model {
        RcsModel::SwerlingI => draw_rcs(mean, rng),
        RcsModel::Fixed => mean,
    }
}

/// Draws every cross section of the scene once for this trial.
pub fn realize_channel<R: Rng + ?Sized>(
    scene: &Scene,
    config: &SystemConfig,
    options: ChannelOptions,
    rng: &mut R,
) -> ChannelRealization {
    let mut scatterers = Vec::with_capacity(scene.clutter.len() + scene.targets.len());
    for u in &scene.clutter.units {
        let rcs = draw(u.mean_rcs, options.rcs_model, rng);
        scatterers.push(Scatterer {
            kind: ScattererKind::Clutter,
            amplitude: echo_amplitude(u.range, rcs, options.amplitude_law, config),
            angle: u.angle,
            range: u.range,
            velocity: 0.0,
        });
    }
    for t in &scene.targets {
        let rcs = draw(t.mean_rcs, options.rcs_model, rng);
        scatterers.push(Scatterer {
            kind: ScattererKind::Target,
            amplitude: echo_amplitude(t.range, rcs, options.amplitude_law, config),
            angle: t.angle,
            range: t.range,
            velocity: t.radial_velocity,
        });
    }
    ChannelRealization { scatterers }
}

/// Per-unit mean clutter cross section that makes the mean total clutter
/// echo power exceed the strongest mean target echo power by `margin_db`.
///
/// Both populations are assumed to follow the same fluctuation model, so the
/// second moment of the draw cancels. Returns 1 m² when there are no targets.
pub fn clutter_rcs_for_margin(
    targets: &[TargetSpec],
    clutter_ranges: &[f64],
    margin_db: f64,
    law: AmplitudeLaw,
) -> f64 {
    if targets.is_empty() || clutter_ranges.is_empty() {
        return 1.0;
    }
    let ratio = 10f64.powf(margin_db / 10.0);
    let inv_r4: f64 = clutter_ranges.iter().map(|r| r.powi(-4)).sum();
    match law {
        AmplitudeLaw::Linear => {
            let strongest = targets.iter().map(|t| t.mean_rcs.powi(2) / t.range.powi(4)).fold(0.0, f64::max);
            (ratio * strongest / inv_r4).sqrt()
        }
        AmplitudeLaw::Sqrt => {
            let strongest = targets.iter().map(|t| t.mean_rcs / t.range.powi(4)).fold(0.0, f64::max);
            ratio * strongest / inv_r4
        }
    }
}
