//! Monte-Carlo driver: single trials through the full sensing chain,
//! association against ground truth, metrics and parameter sweeps.

mod metrics;
mod sweep;

pub use metrics::{rmse, ErrorSamples, MetricsReport, PointMetrics, METRICS_SCHEMA_VERSION};
pub use sweep::{apply_profile, run_sweep, trial_seed, ExperimentSpec, Profile, ScenarioRef, SweepVariable};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{realize_channel, ChannelRealization};
use crate::clutterfilter::{subtract_static, DynamicEecTensor};
use crate::config::{random_target_rcs, RandomTargets, TrialSetup};
use crate::detect::{
    adse_all, bin_velocity, cfar_2d, energy_map, locate_peaks, msjd, refine_angle_beamfit, refine_angle_parabolic,
    AngleDopplerSpectrum, AngleRefinement, DetectionMask,
};
use crate::echoes::{eec, gen_symbols, noise_var_for_snr, synth_echoes, EchoTensor, EecTensor};
use crate::error::{IsacError, Result};
use crate::powalloc::{allocate_schedule, SlotPlan};
use crate::rdest::{build_rd_matrix, estimate_range_velocity, RangeVelocity};
use crate::scenario::{build_scan_schedule, ScanSchedule, SystemConfig, TargetSpec};

/// One detected target after refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    /// Index into the detection clusters.
    pub cluster: usize,
    pub slot: usize,
    pub doppler_bin: usize,
    pub votes: u32,
    /// Radians.
    pub angle: f64,
    /// Subspace range estimate; absent when no range/velocity pair could be
    /// matched to the cluster.
    pub range: Option<f64>,
    /// Subspace velocity when matched, else the bin centre.
    pub velocity: f64,
    pub matched: bool,
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub noise_var_sense: f64,
    pub truth: Vec<TargetSpec>,
    pub estimates: Vec<TargetEstimate>,
    /// Estimate associated with each truth target.
    pub assigned: Vec<Option<usize>>,
    /// Estimates not associated with any target.
    pub false_alarms: usize,
}

impl TrialReport {
    pub fn detected(&self) -> usize {
        self.assigned.iter().filter(|a| a.is_some()).count()
    }
}

/// Intermediate products of a trial, kept for inspection.
#[derive(Debug, Clone)]
pub struct TrialArtifacts {
    pub realization: ChannelRealization,
    pub echoes: EchoTensor,
    pub eec: EecTensor,
    pub dynamic: DynamicEecTensor,
    pub spectra: Vec<AngleDopplerSpectrum>,
    pub detection: DetectionMask,
    pub energy: Vec<f64>,
}

/// A prepared scenario: the scan schedule and per-slot allocation do not
/// depend on the trial seed and are solved once.
#[derive(Debug, Clone)]
pub struct Trial {
    pub setup: TrialSetup,
    pub schedule: ScanSchedule,
    pub plans: Vec<SlotPlan>,
}

impl Trial {
    pub fn new(setup: TrialSetup) -> Result<Self> {
        let schedule = build_scan_schedule(&setup.config);
        let plans = allocate_schedule(&schedule, &setup.scene.users, &setup.config)?;
        Ok(Self { setup, schedule, plans })
    }

    pub fn run(&self, seed: u64) -> Result<TrialReport> {
        self.run_detailed(seed).map(|(r, _)| r)
    }

    pub fn run_detailed(&self, seed: u64) -> Result<(TrialReport, TrialArtifacts)> {
        let setup = &self.setup;
        let users = &setup.scene.users;
        let mut config = setup.config.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut scene = setup.scene.clone();
        if let Some(spec) = &setup.random_targets {
            let drawn = draw_random_targets(spec, &config, &self.schedule, setup.sensing.channel.amplitude_law, &mut rng)?;
            scene.targets.extend(drawn);
        }
        let realization = realize_channel(&scene, &config, setup.sensing.channel, &mut rng);

        if let Some(snr_db) = setup.sensing.snr_db {
            if let Some(strongest) = realization.targets().max_by(|a, b| a.amplitude.total_cmp(&b.amplitude)) {
                let q = self.schedule.nearest_slot(strongest.angle);
                let (_, rho) = self.plans[q].illuminator(users);
                config.noise_var_sense = noise_var_for_snr(snr_db, strongest.amplitude, rho, &config);
            }
        }

        let symbols = gen_symbols(&config, users.len(), setup.sensing.comm_modulation, &mut rng);
        let echoes = synth_echoes(&realization, &self.plans, &symbols, users, &config, &mut rng)?;
        let eec_t = eec(&echoes, &symbols, &self.plans)?;
        let dynamic = subtract_static(&eec_t);
        let spectra = adse_all(&dynamic);
        let (rows, cols) = (spectra[0].rows, spectra[0].cols);
        let masks: Vec<Vec<bool>> = spectra
            .par_iter()
            .map(|s| cfar_2d(&s.magnitude(), rows, cols, &setup.detection.cfar))
            .collect::<Result<_>>()?;
        let mut detection = msjd(&masks, rows, cols, setup.detection.ct_fraction)?;
        let energy = energy_map(&spectra);
        locate_peaks(&mut detection.clusters, &energy, cols);

        let estimates = self.estimate(&detection, &spectra, &dynamic, &config)?;
        let assigned = associate(&scene.targets, &estimates, &self.schedule, &config);
        let used = assigned.iter().flatten().count();
        let report = TrialReport {
            seed,
            noise_var_sense: config.noise_var_sense,
            truth: scene.targets.clone(),
            false_alarms: estimates.len() - used,
            estimates,
            assigned,
        };
        let artifacts = TrialArtifacts { realization, echoes, eec: eec_t, dynamic, spectra, detection, energy };
        Ok((report, artifacts))
    }

    fn estimate(
        &self,
        detection: &DetectionMask,
        spectra: &[AngleDopplerSpectrum],
        dynamic: &DynamicEecTensor,
        config: &SystemConfig,
    ) -> Result<Vec<TargetEstimate>> {
        let users = &self.setup.scene.users;
        let mut out: Vec<TargetEstimate> = detection
            .clusters
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let angle = match self.setup.detection.angle_refinement {
                    AngleRefinement::None => self.schedule.angles[c.peak_row],
                    AngleRefinement::Parabolic => refine_angle_parabolic(c, spectra, &self.schedule),
                    AngleRefinement::BeamFit => refine_angle_beamfit(c, spectra, &self.plans, users, config),
                };
                TargetEstimate {
                    cluster: i,
                    slot: c.peak_row,
                    doppler_bin: c.peak_col,
                    votes: c.votes,
                    angle,
                    range: None,
                    velocity: bin_velocity(c.peak_col as f64, config),
                    matched: false,
                }
            })
            .collect();

        let mut rows: Vec<usize> = out.iter().map(|e| e.slot).collect();
        rows.sort_unstable();
        rows.dedup();
        let per_row: Vec<(usize, Vec<RangeVelocity>)> = rows
            .par_iter()
            .map(|&q| {
                let count = out.iter().filter(|e| e.slot == q).count();
                let rd = build_rd_matrix(dynamic, q);
                estimate_range_velocity(&rd, count, config).map(|p| (q, p))
            })
            .collect::<Result<_>>()?;
        for (q, pairs) in per_row {
            let members: Vec<usize> = (0..out.len()).filter(|&i| out[i].slot == q).collect();
            let bins: Vec<f64> = members.iter().map(|&i| out[i].doppler_bin as f64).collect();
            for (k, j) in match_by_doppler(&bins, &pairs, config) {
                let e = &mut out[members[k]];
                e.range = Some(pairs[j].range);
                e.velocity = pairs[j].velocity;
                e.matched = true;
            }
        }
        Ok(out)
    }
}

/// Runs a single trial of `setup`.
pub fn run_trial(setup: &TrialSetup, seed: u64) -> Result<TrialReport> {
    Trial::new(setup.clone())
        .and_then(|t| t.run(seed))
        .map_err(|e| IsacError::Trial { trial: 0, seed, source: Box::new(e) })
}

/// Cyclic distance between Doppler positions, in bins.
fn doppler_distance(a: f64, b: f64, n: usize) -> f64 {
    let d = (a - b).rem_euclid(n as f64);
    d.min(n as f64 - d)
}

/// Pairs of (cluster, estimate) chosen greedily by Doppler proximity.
/// Pairs further than 1.5 bins from every cluster are left unused.
fn match_by_doppler(bins: &[f64], pairs: &[RangeVelocity], config: &SystemConfig) -> Vec<(usize, usize)> {
    let n = config.n_symbols;
    let dv = config.velocity_resolution();
    let centre = (n / 2) as f64;
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &b) in bins.iter().enumerate() {
        for (j, p) in pairs.iter().enumerate() {
            let d = doppler_distance(b, centre + p.velocity / dv, n);
            if d <= 1.5 {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used_c = vec![false; bins.len()];
    let mut used_p = vec![false; pairs.len()];
    let mut out = Vec::new();
    for (_, i, j) in cand {
        if !used_c[i] && !used_p[j] {
            used_c[i] = true;
            used_p[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Slot and Doppler bin nearest to a target's true angle and velocity.
pub fn truth_cell(target: &TargetSpec, schedule: &ScanSchedule, config: &SystemConfig) -> (usize, usize) {
    let n = config.n_symbols as i64;
    let bin = ((n / 2) as f64 + target.radial_velocity / config.velocity_resolution()).round() as i64;
    (schedule.nearest_slot(target.angle), bin.rem_euclid(n) as usize)
}

/// Nearest-neighbour association: an estimate may claim a target when its
/// representative cell lies within one slot and one Doppler bin (cyclic) of
/// the target's cell. Each estimate is used at most once.
pub fn associate(
    truth: &[TargetSpec],
    estimates: &[TargetEstimate],
    schedule: &ScanSchedule,
    config: &SystemConfig,
) -> Vec<Option<usize>> {
    let n = config.n_symbols;
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (t, target) in truth.iter().enumerate() {
        let (q, b) = truth_cell(target, schedule, config);
        for (e, est) in estimates.iter().enumerate() {
            let dq = (est.slot as f64 - q as f64).abs();
            let db = doppler_distance(est.doppler_bin as f64, b as f64, n);
            if dq <= 1.0 && db <= 1.0 {
                cand.push((dq * dq + db * db, t, e));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = vec![None; truth.len()];
    let mut used = vec![false; estimates.len()];
    for (_, t, e) in cand {
        if out[t].is_none() && !used[e] {
            out[t] = Some(e);
            used[e] = true;
        }
    }
    out
}

/// Draws the per-trial random targets: uniform in `sin θ` away from the
/// scan edges, uniform in range, and with speeds that survive the static
/// filter. Any two targets are at least `min_separation_cells` apart in
/// angle resolution cells or in Doppler bins.
pub fn draw_random_targets<R: Rng + ?Sized>(
    spec: &RandomTargets,
    config: &SystemConfig,
    schedule: &ScanSchedule,
    law: crate::channel::AmplitudeLaw,
    rng: &mut R,
) -> Result<Vec<TargetSpec>> {
    let step = schedule.sine_step();
    let s_lo = schedule.angles[0].sin() + 2.0 * step;
    let s_hi = schedule.angles[schedule.len() - 1].sin() - 2.0 * step;
    let dv = config.velocity_resolution();
    let v_lo = spec.min_speed_cells * dv;
    let v_hi = config.max_unambiguous_velocity() - 2.0 * dv;
    if s_hi <= s_lo || v_hi <= v_lo {
        return Err(IsacError::InvalidConfig("no room for random targets in the scan area".into()));
    }
    let mut out: Vec<TargetSpec> = Vec::with_capacity(spec.count);
    let mut attempts = 0;
    while out.len() < spec.count {
        attempts += 1;
        if attempts > 10_000 {
            return Err(IsacError::InvalidConfig(format!("cannot place {} separated random targets", spec.count)));
        }
        let angle = rng.random_range(s_lo..s_hi).asin();
        let range = rng.random_range(config.r_min..config.r_max);
        let speed = rng.random_range(v_lo..v_hi);
        let velocity = if rng.random::<bool>() { speed } else { -speed };
        let cand = TargetSpec::new(range, angle, velocity, random_target_rcs(spec, range, law));
        let (_, b) = truth_cell(&cand, schedule, config);
        let clash = out.iter().any(|t| {
            let (_, b2) = truth_cell(t, schedule, config);
            (cand.angle.sin() - t.angle.sin()).abs() < spec.min_separation_cells * config.sine_resolution()
                && doppler_distance(b as f64, b2 as f64, config.n_symbols) < spec.min_separation_cells
        });
        if !clash {
            out.push(cand);
        }
    }
    Ok(out)
}

/// Runs `trials` seeded trials in parallel; results keep trial order.
pub fn run_trials(trial: &Trial, seeds: &[u64]) -> Result<Vec<(TrialReport, f64)>> {
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let start = Instant::now();
            trial
                .run(seed)
                .map(|r| (r, start.elapsed().as_secs_f64() * 1e3))
                .map_err(|e| IsacError::Trial { trial: i, seed, source: Box::new(e) })
        })
        .collect()
}
