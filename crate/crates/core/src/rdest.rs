//! Range and velocity estimation on one scan slot: sample covariances of the
//! symbol × subcarrier matrix, MDL model order, MUSIC pseudo-spectra and
//! range-velocity pairing.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clutterfilter::DynamicEecTensor;
use crate::detect::golden_max;
use crate::error::{IsacError, Result};
use crate::scenario::SystemConfig;
use crate::SPEED_OF_LIGHT;

/// Eigenvalues below this fraction of the largest are treated as numerical zero.
const EIGEN_FLOOR: f64 = 1e-10;
/// Search grid points per resolution cell.
const GRID_OVERSAMPLING: usize = 10;

/// `N × M` slice of one slot: rows are symbols, columns subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMatrix {
    pub data: DMatrix<Complex64>,
}

impl RangeDopplerMatrix {
    pub fn n_symbols(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.data.ncols()
    }
}

pub fn build_rd_matrix(dynamic: &DynamicEecTensor, q: usize) -> RangeDopplerMatrix {
    let (_, n, m) = dynamic.dims();
    let block = dynamic.slot(q);
    RangeDopplerMatrix { data: DMatrix::from_fn(n, m, |i, j| block[i * m + j]) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// `R_D = H Hᴴ / M`, steering over symbols.
    Doppler,
    /// `R_R = Hᵀ H* / N`, steering over subcarriers.
    Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDecomposition {
    pub side: Side,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<Complex64>,
    /// Number of snapshots behind the covariance.
    pub snapshots: usize,
    /// MDL order on this side.
    pub order: usize,
}

impl SubspaceDecomposition {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Sample covariance of one side followed by a Hermitian eigendecomposition.
pub fn subspace(rd: &RangeDopplerMatrix, side: Side) -> Result<SubspaceDecomposition> {
    let (n, m) = (rd.n_symbols(), rd.n_subcarriers());
    if n < 2 || m < 2 {
        return Err(IsacError::Dimension(format!("range-Doppler matrix {n}×{m} is too small")));
    }
    let (cov, snapshots) = match side {
        Side::Doppler => (&rd.data * rd.data.adjoint() / Complex64::new(m as f64, 0.0), m),
        Side::Range => (rd.data.transpose() * rd.data.map(|v| v.conj()) / Complex64::new(n as f64, 0.0), n),
    };
    if cov.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(IsacError::Numerical("covariance has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let dim = eigenvalues.len();
    let eigenvectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    let mdl = mdl_order(&eigenvalues, snapshots);
    Ok(SubspaceDecomposition { side, eigenvalues, eigenvectors, snapshots, order: mdl })
}

/// Wax–Kailath minimum description length order estimate.
///
/// `MDL(k) = -L (p-k) ln(g_k / a_k) + k (2p - k) ln(L) / 2`, where `g_k`
/// and `a_k` are the geometric and arithmetic means of the `p - k` smallest
/// eigenvalues. Only the `min(p, L)` largest eigenvalues carry information,
/// and all are floored at `1e-10` times the largest.
pub fn mdl_order(eigenvalues_desc: &[f64], snapshots: usize) -> usize {
    let p = eigenvalues_desc.len().min(snapshots);
    if p < 2 {
        return 0;
    }
    let top = eigenvalues_desc[0].max(0.0);
    if top <= 0.0 {
        return 0;
    }
    let floor = top * EIGEN_FLOOR;
    let lam: Vec<f64> = eigenvalues_desc[..p].iter().map(|&v| v.max(floor)).collect();
    let l = snapshots as f64;
    let mut best = (0, f64::INFINITY);
    for k in 0..p {
        let tail = &lam[k..];
        let count = tail.len() as f64;
        let arith = tail.iter().sum::<f64>() / count;
        let log_geo = tail.iter().map(|v| v.ln()).sum::<f64>() / count;
        let kf = k as f64;
        let score = -l * count * (log_geo - arith.ln()) + 0.5 * kf * (2.0 * p as f64 - kf) * l.ln();
        if score < best.1 {
            best = (k, score);
        }
    }
    best.0
}

/// Order used for the joint estimate: the smaller of the two MDL orders.
pub fn joint_order(doppler: &SubspaceDecomposition, range: &SubspaceDecomposition) -> usize {
    doppler.order.min(range.order)
}

/// Doppler steering vector `exp(j 4π f0 v T_s n / c)`.
pub fn doppler_steering(velocity: f64, n: usize, config: &SystemConfig) -> Vec<Complex64> {
    let step = config.doppler_phase_step(velocity);
    (0..n).map(|i| Complex64::from_polar(1.0, step * i as f64)).collect()
}

/// Range steering vector `exp(-j 4π r Δf m / c)`.
pub fn range_steering(range: f64, m: usize, config: &SystemConfig) -> Vec<Complex64> {
    let step = -4.0 * PI * range * config.delta_f / SPEED_OF_LIGHT;
    (0..m).map(|i| Complex64::from_polar(1.0, step * i as f64)).collect()
}

fn steering(decomp: &SubspaceDecomposition, x: f64, config: &SystemConfig) -> Vec<Complex64> {
    match decomp.side {
        Side::Doppler => doppler_steering(x, decomp.dimension(), config),
        Side::Range => range_steering(x, decomp.dimension(), config),
    }
}

/// Search grid of one side: `[0, c/(2Δf))` for range and
/// `[-v_max, v_max)` for velocity, a tenth of a resolution cell apart.
pub fn search_grid(side: Side, config: &SystemConfig) -> Vec<f64> {
    match side {
        Side::Range => {
            let step = config.range_resolution() / GRID_OVERSAMPLING as f64;
            let count = (config.max_unambiguous_range() / step).round() as usize;
            (0..count).map(|i| i as f64 * step).collect()
        }
        Side::Doppler => {
            let vmax = config.max_unambiguous_velocity();
            let count = GRID_OVERSAMPLING * config.n_symbols;
            let step = 2.0 * vmax / count as f64;
            (0..count).map(|i| -vmax + i as f64 * step).collect()
        }
    }
}

/// `kᴴ U_N U_N^H k`, evaluated through the signal subspace as `‖k‖² - ‖U_Sᴴ k‖²`.
fn noise_projection(decomp: &SubspaceDecomposition, order: usize, k: &[Complex64]) -> f64 {
    let total: f64 = k.iter().map(|v| v.norm_sqr()).sum();
    let mut signal = 0.0;
    for i in 0..order {
        let col = decomp.eigenvectors.column(i);
        let dot: Complex64 = col.iter().zip(k).map(|(u, v)| u.conj() * v).sum();
        signal += dot.norm_sqr();
    }
    (total - signal).max(total * 1e-16)
}

/// MUSIC pseudo-spectrum `1 / (kᴴ U_N U_Nᴴ k)` on `grid` with a signal
/// subspace of dimension `order`.
pub fn music_spectrum(
    decomp: &SubspaceDecomposition,
    order: usize,
    grid: &[f64],
    config: &SystemConfig,
) -> Result<Vec<f64>> {
    if order >= decomp.dimension() {
        return Err(IsacError::EmptyNoiseSubspace { order, dimension: decomp.dimension() });
    }
    Ok(grid.iter().map(|&x| 1.0 / noise_projection(decomp, order, &steering(decomp, x, config))).collect())
}

/// Locations of the `order` highest local maxima of the pseudo-spectrum,
/// refined by golden-section search. Both grids are cyclic.
pub fn music_peaks(decomp: &SubspaceDecomposition, order: usize, config: &SystemConfig) -> Result<Vec<f64>> {
    if order == 0 {
        return Ok(vec![]);
    }
    let grid = search_grid(decomp.side, config);
    let spec = music_spectrum(decomp, order, &grid, config)?;
    let len = grid.len();
    let step = grid[1] - grid[0];
    let mut peaks: Vec<usize> = (0..len)
        .filter(|&i| {
            let prev = spec[(i + len - 1) % len];
            let next = spec[(i + 1) % len];
            spec[i] > prev && spec[i] >= next
        })
        .collect();
    peaks.sort_by(|&a, &b| spec[b].total_cmp(&spec[a]));
    peaks.truncate(order);
    let (lo, hi) = (grid[0], grid[0] + step * len as f64);
    let period = hi - lo;
    Ok(peaks
        .into_iter()
        .map(|i| {
            let f = |x: f64| -noise_projection(decomp, order, &steering(decomp, x, config));
            let x = golden_max(&f, grid[i] - step, grid[i] + step, step * 1e-6);
            lo + (x - lo).rem_euclid(period)
        })
        .collect())
}

/// Matching score `|k_Dᴴ(v) H k_R*(r)|`.
pub fn match_score(rd: &RangeDopplerMatrix, range: f64, velocity: f64, config: &SystemConfig) -> f64 {
    let kd = doppler_steering(velocity, rd.n_symbols(), config);
    let kr = range_steering(range, rd.n_subcarriers(), config);
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, d) in kd.iter().enumerate() {
        let row: Complex64 = (0..rd.n_subcarriers()).map(|j| rd.data[(i, j)] * kr[j].conj()).sum();
        acc += d.conj() * row;
    }
    acc.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeVelocity {
    pub range: f64,
    pub velocity: f64,
    pub score: f64,
}

/// Greedy one-to-one pairing by descending matching score. Returns at
/// most `count` pairs, strongest first.
pub fn match_pairs(
    rd: &RangeDopplerMatrix,
    ranges: &[f64],
    velocities: &[f64],
    count: usize,
    config: &SystemConfig,
) -> Vec<RangeVelocity> {
    let mut cand: Vec<(usize, usize, f64)> = Vec::with_capacity(ranges.len() * velocities.len());
    for (i, &r) in ranges.iter().enumerate() {
        for (j, &v) in velocities.iter().enumerate() {
            cand.push((i, j, match_score(rd, r, v, config)));
        }
    }
    cand.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut used_r = vec![false; ranges.len()];
    let mut used_v = vec![false; velocities.len()];
    let mut out = Vec::new();
    for (i, j, s) in cand {
        if out.len() == count {
            break;
        }
        if !used_r[i] && !used_v[j] {
            used_r[i] = true;
            used_v[j] = true;
            out.push(RangeVelocity { range: ranges[i], velocity: velocities[j], score: s });
        }
    }
    out
}

/// Full estimate on one slot. The model order is the joint MDL order,
/// raised to `min_order` (the number of detections in the slot) and capped
/// so the noise subspace stays nonempty.
pub fn estimate_range_velocity(
    rd: &RangeDopplerMatrix,
    min_order: usize,
    config: &SystemConfig,
) -> Result<Vec<RangeVelocity>> {
    let dop = subspace(rd, Side::Doppler)?;
    let rng = subspace(rd, Side::Range)?;
    let cap = rd.n_symbols().min(rd.n_subcarriers()) - 1;
    let order = joint_order(&dop, &rng).max(min_order).min(cap);
    let velocities = music_peaks(&dop, order, config)?;
    let ranges = music_peaks(&rng, order, config)?;
    Ok(match_pairs(rd, &ranges, &velocities, order, config))
}

/// Writes `x,value` rows of a sampled pseudo-spectrum.
pub fn write_spectrum_csv<W: std::io::Write>(mut w: W, header: &str, grid: &[f64], values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "{header},pseudo_spectrum")?;
    for (x, v) in grid.iter().zip(values) {
        writeln!(w, "{x},{v:.9e}")?;
    }
    Ok(())
}
