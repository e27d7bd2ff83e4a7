//! Angle-Doppler spectra, 2D cell-averaging CFAR, multi-subcarrier joint
//! detection, clustering and angle extraction.
//!
//! All matrices are row-major with scan slots as rows and Doppler bins as
//! columns. The Doppler axis is cyclic, the angle axis is not.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::arrayfield::array_factor;
use crate::clutterfilter::DynamicEecTensor;
use crate::error::{IsacError, Result};
use crate::powalloc::SlotPlan;
use crate::scenario::{ScanSchedule, SystemConfig, UserSpec};

/// Angle-Doppler spectrum of one subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleDopplerSpectrum {
    pub rows: usize,
    pub cols: usize,
    /// Row-wise FFT over symbols, zero Doppler at column `cols / 2`.
    pub spectrum: Vec<Complex64>,
}

impl AngleDopplerSpectrum {
    pub fn magnitude(&self) -> Vec<f64> {
        self.spectrum.iter().map(|v| v.norm()).collect()
    }

    pub fn power(&self) -> Vec<f64> {
        self.spectrum.iter().map(|v| v.norm_sqr()).collect()
    }
}

/// Row-wise `N`-point FFT of subcarrier `m`, followed by an FFT shift.
pub fn adse(dynamic: &DynamicEecTensor, m: usize) -> AngleDopplerSpectrum {
    let (q, n, _) = dynamic.dims();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let half = n / 2;
    let mut spectrum = vec![Complex64::new(0.0, 0.0); q * n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for row in 0..q {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = dynamic.get(row, i, m);
        }
        fft.process(&mut buf);
        for (k, v) in buf.iter().enumerate() {
            spectrum[row * n + (k + half) % n] = *v;
        }
    }
    AngleDopplerSpectrum { rows: q, cols: n, spectrum }
}

/// Spectra of every subcarrier, computed in parallel.
pub fn adse_all(dynamic: &DynamicEecTensor) -> Vec<AngleDopplerSpectrum> {
    (0..dynamic.subcarriers).into_par_iter().map(|m| adse(dynamic, m)).collect()
}

/// Radial velocity at the centre of (shifted) Doppler bin `bin`.
pub fn bin_velocity(bin: f64, config: &SystemConfig) -> f64 {
    (bin - (config.n_symbols / 2) as f64) * config.velocity_resolution()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarParams {
    /// Guard half-width on each axis.
    pub guard: usize,
    /// Reference band width beyond the guard on each axis.
    pub reference: usize,
    pub pfa: f64,
    /// Cells more than this many dB below the strongest cell are never
    /// flagged. Limits detections to a finite dynamic range in noise-free data.
    pub floor_db: Option<f64>,
}

impl Default for CfarParams {
    fn default() -> Self {
        Self { guard: 2, reference: 4, pfa: 1e-4, floor_db: Some(25.0) }
    }
}

impl CfarParams {
    pub fn validate(&self) -> Result<()> {
        if self.reference == 0 || !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(IsacError::InvalidConfig("CFAR needs a reference band and 0 < P_fa < 1".into()));
        }
        Ok(())
    }

    fn half_window(&self) -> usize {
        self.guard + self.reference
    }
}

/// Inclusive 2D prefix sums over `rows × cols`.
struct SummedArea {
    cols: usize,
    table: Vec<f64>,
}

impl SummedArea {
    fn new(values: &[f64], rows: usize, cols: usize) -> Self {
        let w = cols + 1;
        let mut table = vec![0.0; (rows + 1) * w];
        for r in 0..rows {
            let mut run = 0.0;
            for c in 0..cols {
                run += values[r * cols + c];
                table[(r + 1) * w + c + 1] = table[r * w + c + 1] + run;
            }
        }
        Self { cols, table }
    }

    /// Sum over rows `r0..r1` and columns `c0..c1` (half-open).
    fn sum(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let w = self.cols + 1;
        self.table[r1 * w + c1] - self.table[r0 * w + c1] - self.table[r1 * w + c0] + self.table[r0 * w + c0]
    }
}

/// Cell-averaging CFAR on the power of `magnitude`.
///
/// A cell is flagged when its power exceeds `N_ref (P_fa^{-1/N_ref} - 1)`
/// times the mean power of its reference cells: the square window of
/// half-width `guard + reference` minus the guard square. Windows wrap on
/// the Doppler axis and are truncated at the first and last scan slot, with
/// `N_ref` counted per cell.
pub fn cfar_2d(magnitude: &[f64], rows: usize, cols: usize, params: &CfarParams) -> Result<Vec<bool>> {
    params.validate()?;
    let w = params.half_window();
    let g = params.guard;
    if 2 * w + 1 > rows || 2 * w + 1 > cols {
        return Err(IsacError::WindowTooLarge { window_rows: 2 * w + 1, window_cols: 2 * w + 1, rows, cols });
    }
    let power: Vec<f64> = magnitude.iter().map(|v| v * v).collect();
    // pad Doppler columns cyclically so windows never straddle the seam
    let wide = cols + 2 * w;
    let mut padded = vec![0.0; rows * wide];
    for r in 0..rows {
        for c in 0..wide {
            padded[r * wide + c] = power[r * cols + (c + cols - w) % cols];
        }
    }
    let sat = SummedArea::new(&padded, rows, wide);
    let floor = params
        .floor_db
        .map(|db| power.iter().copied().fold(0.0, f64::max) * 10f64.powf(-db / 10.0))
        .unwrap_or(0.0);
    let mut out = vec![false; rows * cols];
    for r in 0..rows {
        let (o0, o1) = (r.saturating_sub(w), (r + w + 1).min(rows));
        let (i0, i1) = (r.saturating_sub(g), (r + g + 1).min(rows));
        let n_ref = ((o1 - o0) * (2 * w + 1) - (i1 - i0) * (2 * g + 1)) as f64;
        let scale = params.pfa.powf(-1.0 / n_ref) - 1.0;
        for c in 0..cols {
            let pc = c + w;
            let outer = sat.sum(o0, o1, pc - w, pc + w + 1);
            let inner = sat.sum(i0, i1, pc - g, pc + g + 1);
            let p = power[r * cols + c];
            out[r * cols + c] = p > floor && p > scale * (outer - inner);
        }
    }
    Ok(out)
}

/// One 8-connected group of cells in the final detection mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cells: Vec<(usize, usize)>,
    /// Sum of subcarrier votes over the cluster.
    pub votes: u32,
    pub centroid_row: f64,
    pub centroid_col: f64,
    /// Representative cell; the strongest one once [`locate_peaks`] has run,
    /// otherwise the cell with the most votes.
    pub peak_row: usize,
    pub peak_col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMask {
    pub rows: usize,
    pub cols: usize,
    /// Number of subcarriers flagging each cell.
    pub votes: Vec<u32>,
    pub mask: Vec<bool>,
    pub clusters: Vec<Cluster>,
}

/// Accumulates per-subcarrier masks, keeps cells with at least
/// `ct_fraction · M` votes and groups them into 8-connected clusters.
pub fn msjd(masks: &[Vec<bool>], rows: usize, cols: usize, ct_fraction: f64) -> Result<DetectionMask> {
    if masks.is_empty() {
        return Err(IsacError::InvalidConfig("joint detection needs at least one subcarrier".into()));
    }
    if !(ct_fraction > 0.0 && ct_fraction <= 1.0) {
        return Err(IsacError::InvalidConfig(format!("ct_fraction {ct_fraction} outside (0, 1]")));
    }
    let mut votes = vec![0u32; rows * cols];
    for m in masks {
        for (v, &f) in votes.iter_mut().zip(m) {
            *v += f as u32;
        }
    }
    let need = ct_fraction * masks.len() as f64;
    let mask: Vec<bool> = votes.iter().map(|&v| v > 0 && v as f64 >= need - 1e-9).collect();
    let clusters = label_clusters(&mask, &votes, rows, cols);
    Ok(DetectionMask { rows, cols, votes, mask, clusters })
}

fn label_clusters(mask: &[bool], votes: &[u32], rows: usize, cols: usize) -> Vec<Cluster> {
    let mut seen = vec![false; mask.len()];
    let mut clusters = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut cells = Vec::new();
        while let Some(i) = stack.pop() {
            let (r, c) = (i / cols, i % cols);
            cells.push((r, c));
            for dr in -1i64..=1 {
                let rr = r as i64 + dr;
                if rr < 0 || rr >= rows as i64 {
                    continue;
                }
                for dc in -1i64..=1 {
                    let cc = (c as i64 + dc).rem_euclid(cols as i64);
                    let j = rr as usize * cols + cc as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        cells.sort_unstable();
        let total: u32 = cells.iter().map(|&(r, c)| votes[r * cols + c]).sum();
        let wsum = total.max(1) as f64;
        let centroid_row = cells.iter().map(|&(r, c)| r as f64 * votes[r * cols + c] as f64).sum::<f64>() / wsum;
        let centroid_col = cells.iter().map(|&(r, c)| c as f64 * votes[r * cols + c] as f64).sum::<f64>() / wsum;
        let &(peak_row, peak_col) = cells
            .iter()
            .max_by(|a, b| votes[a.0 * cols + a.1].cmp(&votes[b.0 * cols + b.1]).then(b.cmp(a)))
            .expect("cluster has cells");
        clusters.push(Cluster { cells, votes: total, centroid_row, centroid_col, peak_row, peak_col });
    }
    clusters
}

/// Total power over subcarriers of each angle-Doppler cell.
pub fn energy_map(spectra: &[AngleDopplerSpectrum]) -> Vec<f64> {
    let mut e = vec![0.0; spectra[0].spectrum.len()];
    for s in spectra {
        for (acc, v) in e.iter_mut().zip(&s.spectrum) {
            *acc += v.norm_sqr();
        }
    }
    e
}

/// Moves each cluster's representative cell to its strongest cell.
pub fn locate_peaks(clusters: &mut [Cluster], energy: &[f64], cols: usize) {
    for cl in clusters {
        let &(r, c) = cl
            .cells
            .iter()
            .max_by(|a, b| energy[a.0 * cols + a.1].total_cmp(&energy[b.0 * cols + b.1]))
            .expect("cluster has cells");
        cl.peak_row = r;
        cl.peak_col = c;
    }
}

/// Scan angle of each cluster's representative row.
pub fn extract_angles(clusters: &[Cluster], schedule: &ScanSchedule) -> Vec<f64> {
    clusters.iter().map(|c| schedule.angles[c.peak_row]).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleRefinement {
    /// Representative scan angle.
    None,
    /// Three-point parabola through the magnitude sum over subcarriers.
    Parabolic,
    /// Least-squares fit of the two-way beam pattern to the complex
    /// spectra of neighbouring slots.
    #[default]
    BeamFit,
}

/// Three-point parabolic interpolation in `sin θ` across adjacent scan rows
/// of `Σ_m |spectrum|` at the cluster's Doppler column.
pub fn refine_angle_parabolic(
    cluster: &Cluster,
    spectra: &[AngleDopplerSpectrum],
    schedule: &ScanSchedule,
) -> f64 {
    let cols = spectra[0].cols;
    let (q, c) = (cluster.peak_row, cluster.peak_col);
    if q == 0 || q + 1 >= schedule.len() {
        return schedule.angles[q];
    }
    let mag = |row: usize| spectra.iter().map(|s| s.spectrum[row * cols + c].norm()).sum::<f64>();
    let (a, b, d) = (mag(q - 1), mag(q), mag(q + 1));
    let denom = a - 2.0 * b + d;
    let delta = if denom < 0.0 { (0.5 * (a - d) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    (schedule.angles[q].sin() + delta * schedule.sine_step()).clamp(-1.0, 1.0).asin()
}

/// Half-width, in slots, of the neighbourhood used by the beam fit.
const FIT_HALF_WIDTH: usize = 2;

/// Two-way pattern of slot `q` toward `theta`: receive combiner gain times
/// the gain of the beam whose symbols the slot's echoes are divided by.
fn slot_response(theta: f64, plan: &SlotPlan, users: &[UserSpec], config: &SystemConfig) -> Complex64 {
    let (div_angle, rho) = plan.illuminator(users);
    let rx = array_factor(plan.angle, theta, config.n_rx, config) / (config.n_rx as f64).sqrt();
    let tx = array_factor(theta, div_angle, config.n_tx, config) * (rho * config.tx_power / config.n_tx as f64).sqrt();
    rx * tx
}

/// Angle maximizing `Σ_m |gᴴ h_m|² / ‖g‖²`, where `h_m` are the complex
/// spectrum values of the slots around the cluster at its Doppler column
/// and `g(θ)` the corresponding two-way slot responses.
pub fn refine_angle_beamfit(
    cluster: &Cluster,
    spectra: &[AngleDopplerSpectrum],
    plans: &[SlotPlan],
    users: &[UserSpec],
    config: &SystemConfig,
) -> f64 {
    let cols = spectra[0].cols;
    let q0 = cluster.peak_row;
    let c = cluster.peak_col;
    let lo = q0.saturating_sub(FIT_HALF_WIDTH);
    let hi = (q0 + FIT_HALF_WIDTH + 1).min(plans.len());
    let k = hi - lo;
    // sample covariance Σ_m h_m h_mᴴ over the neighbourhood
    let mut cov = vec![Complex64::new(0.0, 0.0); k * k];
    for s in spectra {
        let h: Vec<Complex64> = (lo..hi).map(|q| s.spectrum[q * cols + c]).collect();
        for i in 0..k {
            for j in 0..k {
                cov[i * k + j] += h[i] * h[j].conj();
            }
        }
    }
    let objective = |sine: f64| -> f64 {
        let theta = sine.clamp(-1.0, 1.0).asin();
        let g: Vec<Complex64> = (lo..hi).map(|q| slot_response(theta, &plans[q], users, config)).collect();
        let norm: f64 = g.iter().map(|v| v.norm_sqr()).sum();
        if norm <= 0.0 {
            return 0.0;
        }
        let mut quad = Complex64::new(0.0, 0.0);
        for i in 0..k {
            for j in 0..k {
                quad += g[i].conj() * cov[i * k + j] * g[j];
            }
        }
        quad.re / norm
    };
    let s0 = plans[q0].angle.sin();
    let step = if plans.len() > 1 {
        (plans[plans.len() - 1].angle.sin() - plans[0].angle.sin()) / (plans.len() - 1) as f64
    } else {
        config.sine_resolution()
    };
    // coarse grid over ±1.5 slots, then golden-section on the best bracket
    let n_grid = 61;
    let span = 1.5 * step;
    let grid_step = 2.0 * span / (n_grid - 1) as f64;
    let (mut best_i, mut best_v) = (0, f64::NEG_INFINITY);
    for i in 0..n_grid {
        let v = objective(s0 - span + i as f64 * grid_step);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let centre = s0 - span + best_i as f64 * grid_step;
    let sine = golden_max(&objective, centre - grid_step, centre + grid_step, 1e-10);
    sine.clamp(-1.0, 1.0).asin()
}

/// Golden-section search for a maximum of a unimodal function on `[a, b]`.
pub(crate) fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (b - a).abs() > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Writes a `rows × cols` grid as CSV: a `c0,c1,…` header, then one matrix
/// row per line.
pub fn write_grid_csv<W: std::io::Write, T: std::fmt::Display>(
    mut w: W,
    values: &[T],
    cols: usize,
) -> std::io::Result<()> {
    let header: Vec<String> = (0..cols).map(|c| format!("c{c}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in values.chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
