//! Static-clutter removal by subtracting the per-row temporal mean of the
//! equivalent echo channel.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::echoes::{Cube, EecTensor};

/// Equivalent echo channel with the static component removed.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicEecTensor(pub Cube);

impl std::ops::Deref for DynamicEecTensor {
    type Target = Cube;
    fn deref(&self) -> &Cube {
        &self.0
    }
}

/// Mean over symbols of each slot row of one subcarrier's `Q × N` matrix
/// (row-major, `Q` rows of `N` symbols).
pub fn static_estimate(subcarrier: &[Complex64], n_symbols: usize) -> Vec<Complex64> {
    subcarrier
        .chunks_exact(n_symbols)
        .map(|row| row.iter().sum::<Complex64>() / n_symbols as f64)
        .collect()
}

/// Subtracts the static estimate from every `(slot, subcarrier)` row.
pub fn subtract_static(eec: &EecTensor) -> DynamicEecTensor {
    let mut out = eec.0.clone();
    let (n, m) = (out.symbols, out.subcarriers);
    out.data.par_chunks_mut(n * m).for_each(|block| {
        for sc in 0..m {
            let mean = (0..n).map(|i| block[i * m + sc]).sum::<Complex64>() / n as f64;
            for i in 0..n {
                block[i * m + sc] -= mean;
            }
        }
    });
    DynamicEecTensor(out)
}

/// `|(1/N) Σ_n e^{jωn}| = |sin(Nω/2) / (N sin(ω/2))|`: the fraction of a
/// Doppler-shifted return that leaks into the static estimate.
pub fn leakage_factor(omega: f64, n: usize) -> f64 {
    let nf = n as f64;
    let denom = (omega / 2.0).sin();
    if denom.abs() < 1e-15 {
        return 1.0;
    }
    ((nf * omega / 2.0).sin() / (nf * denom)).abs()
}

/// Leakage evaluated by direct summation.
pub fn leakage_sum(omega: f64, n: usize) -> f64 {
    ((0..n).map(|k| Complex64::from_polar(1.0, omega * k as f64)).sum::<Complex64>() / n as f64).norm()
}
