//! Communications receiver chain: Gray-mapped QAM, single-tap equalization
//! with perfect channel knowledge, and bit-error counting.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arrayfield::user_sinr;
use crate::echoes::{gen_symbols, user_rx};
use crate::error::{IsacError, Result};
use crate::powalloc::{allocate_schedule, PlanStatus, SlotPlan};
use crate::scenario::{build_scan_schedule, SystemConfig, UserSpec};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    #[default]
    Qam16,
    Qpsk,
}

/// Gray order of the per-axis 16-QAM levels: bit pair `b0 b1` selects
/// `LEVELS[GRAY_INDEX[b0 b1]]`.
const QAM16_LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
const QAM16_BITS: [[u8; 2]; 4] = [[0, 0], [0, 1], [1, 1], [1, 0]];

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qam16 => 4,
            Modulation::Qpsk => 2,
        }
    }

    fn axis_scale(self) -> f64 {
        match self {
            Modulation::Qam16 => 1.0 / 10f64.sqrt(),
            Modulation::Qpsk => 1.0 / 2f64.sqrt(),
        }
    }

    fn axis_level(self, bits: &[u8]) -> f64 {
        match self {
            Modulation::Qam16 => {
                let idx = QAM16_BITS.iter().position(|b| b[0] == bits[0] && b[1] == bits[1]).unwrap_or(0);
                QAM16_LEVELS[idx]
            }
            Modulation::Qpsk => {
                if bits[0] == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    fn axis_decide(self, x: f64, out: &mut Vec<u8>) {
        let x = x / self.axis_scale();
        match self {
            Modulation::Qam16 => {
                let idx = if x < -2.0 {
                    0
                } else if x < 0.0 {
                    1
                } else if x < 2.0 {
                    2
                } else {
                    3
                };
                out.extend_from_slice(&QAM16_BITS[idx]);
            }
            Modulation::Qpsk => out.push(u8::from(x >= 0.0)),
        }
    }

    /// Maps bits to unit-average-power symbols. First half of each
    /// bit group drives the in-phase axis.
    pub fn modulate(self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let k = self.bits_per_symbol();
        if bits.len() % k != 0 {
            return Err(IsacError::Dimension(format!("{} bits is not a multiple of {k}", bits.len())));
        }
        let h = k / 2;
        let s = self.axis_scale();
        Ok(bits
            .chunks_exact(k)
            .map(|c| Complex64::new(self.axis_level(&c[..h]) * s, self.axis_level(&c[h..]) * s))
            .collect())
    }

    /// Minimum-distance decisions.
    pub fn demodulate(self, symbols: &[Complex64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for s in symbols {
            self.axis_decide(s.re, &mut out);
            self.axis_decide(s.im, &mut out);
        }
        out
    }

    pub fn constellation(self) -> Vec<Complex64> {
        let k = self.bits_per_symbol();
        let bits: Vec<u8> = (0..1usize << k).flat_map(|v| (0..k).rev().map(move |i| ((v >> i) & 1) as u8)).collect();
        self.modulate(&bits).expect("whole symbols")
    }

    /// `E[1/|s|²]` over the constellation: the noise inflation when echoes
    /// are divided by these symbols.
    pub fn inverse_power_mean(self) -> f64 {
        let c = self.constellation();
        c.iter().map(|s| 1.0 / s.norm_sqr()).sum::<f64>() / c.len() as f64
    }
}

/// Bits carried by one user's symbol stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitStream {
    pub bits: Vec<u8>,
}

impl BitStream {
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self { bits: (0..len).map(|_| rng.random::<bool>() as u8).collect() }
    }
}

/// Gaussian Q-function `P(X > x)` for standard normal `X`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / 2f64.sqrt())
}

/// Nearest-neighbour approximation of Gray 16-QAM bit error rate at `es_n0` (linear).
pub fn qam16_ber_approx(es_n0: f64) -> f64 {
    0.75 * q_function((es_n0 / 5.0).sqrt())
}

/// Effective-reception coefficient `γ' sqrt(ρ_c P_t N_T)` of a user on subcarrier `m`.
pub fn effective_gain(user: &UserSpec, rho_c: f64, m: usize, config: &SystemConfig) -> Complex64 {
    let fm = config.subcarrier_freq(m);
    let phase = 2.0 * PI * fm * user.range / SPEED_OF_LIGHT;
    Complex64::from_polar(user.fading(config) * (rho_c * config.tx_power * config.n_tx as f64).sqrt(), phase)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitErrors {
    pub errors: u64,
    pub bits: u64,
}

impl BitErrors {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    pub fn add(&mut self, other: BitErrors) {
        self.errors += other.errors;
        self.bits += other.bits;
    }
}

/// Equalizes one user's `N × M` samples (row-major over symbols) with the
/// known effective-reception tap and counts bit errors against `tx_bits`.
pub fn equalize_and_score(
    rx: &[Complex64],
    tx_bits: &[u8],
    user: &UserSpec,
    rho_c: f64,
    modulation: Modulation,
    config: &SystemConfig,
) -> BitErrors {
    let m_count = config.n_subcarriers;
    let taps: Vec<Complex64> = (0..m_count).map(|m| effective_gain(user, rho_c, m, config)).collect();
    let eq: Vec<Complex64> = rx
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let h = taps[i % m_count];
            if h.norm_sqr() > 0.0 {
                y / h
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let decided = modulation.demodulate(&eq);
    let errors = decided.iter().zip(tx_bits).filter(|(a, b)| a != b).count() as u64;
    BitErrors { errors, bits: tx_bits.len() as u64 }
}

/// One point of a BER sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    /// SINR requirement applied to every user, dB.
    pub sinr_db: f64,
    pub n_tx: usize,
    pub ber: f64,
    pub errors: u64,
    pub bits: u64,
    /// Mean achieved SINR over users and slots, dB.
    pub achieved_sinr_db: f64,
    /// Fraction of slots that fell back to best-effort allocation.
    pub best_effort_fraction: f64,
}

/// Simulates the user links of a full scan at each SINR requirement and
/// counts bit errors over every user until `min_bits` bits have been scored.
pub fn ber_sweep(
    config: &SystemConfig,
    users: &[UserSpec],
    sinr_db: &[f64],
    min_bits: u64,
    modulation: Modulation,
    seed: u64,
) -> Result<Vec<BerPoint>> {
    let schedule = build_scan_schedule(config);
    let mut out = Vec::with_capacity(sinr_db.len());
    for (i, &db) in sinr_db.iter().enumerate() {
        let eps = 10f64.powf(db / 10.0);
        let scene_users: Vec<UserSpec> = users.iter().map(|u| UserSpec { sinr_min: eps, ..u.clone() }).collect();
        let plans = allocate_schedule(&schedule, &scene_users, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut tally = BitErrors::default();
        let mut q = 0usize;
        while tally.bits < min_bits {
            let plan = &plans[q % plans.len()];
            tally.add(score_slot(plan, &scene_users, modulation, config, &mut rng)?);
            q += 1;
        }
        let achieved: Vec<f64> = plans
            .iter()
            .flat_map(|p| (0..users.len()).map(move |u| (p, u)))
            .map(|(p, u)| user_sinr(u, &p.alloc, &scene_users, p.angle, config))
            .collect();
        let mean_sinr = achieved.iter().sum::<f64>() / achieved.len() as f64;
        let fallback = plans.iter().filter(|p| p.status == PlanStatus::BestEffort).count();
        out.push(BerPoint {
            sinr_db: db,
            n_tx: config.n_tx,
            ber: tally.ber(),
            errors: tally.errors,
            bits: tally.bits,
            achieved_sinr_db: 10.0 * mean_sinr.log10(),
            best_effort_fraction: fallback as f64 / plans.len() as f64,
        });
    }
    Ok(out)
}

fn score_slot(
    plan: &SlotPlan,
    users: &[UserSpec],
    modulation: Modulation,
    config: &SystemConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BitErrors> {
    let mut one = config.clone();
    one.n_slots = 1;
    let symbols = gen_symbols(&one, users.len(), modulation, rng);
    let rx = user_rx(users, plan, &symbols, 0, config, rng);
    let mut tally = BitErrors::default();
    for (p, u) in users.iter().enumerate() {
        tally.add(equalize_and_score(&rx[p], &symbols.bits[p].bits, u, plan.alloc.rho_c[p], modulation, config));
    }
    Ok(tally)
}

/// Writes `sinr_db,n_tx,ber,errors,bits,achieved_sinr_db,best_effort_fraction`.
pub fn write_ber_csv<W: std::io::Write>(mut w: W, points: &[BerPoint]) -> std::io::Result<()> {
    writeln!(w, "sinr_db,n_tx,ber,errors,bits,achieved_sinr_db,best_effort_fraction")?;
    for p in points {
        writeln!(
            w,
            "{},{},{:.6e},{},{},{:.4},{:.4}",
            p.sinr_db, p.n_tx, p.ber, p.errors, p.bits, p.achieved_sinr_db, p.best_effort_fraction
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn round_trip_all_patterns() {
        for m in [Modulation::Qam16, Modulation::Qpsk] {
            let k = m.bits_per_symbol();
            let bits: Vec<u8> = (0..1usize << k).flat_map(|v| (0..k).rev().map(move |i| ((v >> i) & 1) as u8)).collect();
            assert_eq!(m.demodulate(&m.modulate(&bits).unwrap()), bits);
        }
    }

    #[test]
    fn unit_average_power() {
        for m in [Modulation::Qam16, Modulation::Qpsk] {
            let c = m.constellation();
            let p = c.iter().map(|s| s.norm_sqr()).sum::<f64>() / c.len() as f64;
            assert!((p - 1.0).abs() < 1e-12);
        }
        assert!((Modulation::Qam16.inverse_power_mean() - (5.0 + 2.0 + 10.0 / 18.0) / 4.0).abs() < 1e-12);
        assert!((Modulation::Qpsk.inverse_power_mean() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let c = Modulation::Qam16.constellation();
        let d_min = 2.0 / 10f64.sqrt();
        for (i, a) in c.iter().enumerate() {
            for (j, b) in c.iter().enumerate() {
                if ((a - b).norm() - d_min).abs() < 1e-9 {
                    assert_eq!((i ^ j).count_ones(), 1, "{i} {j}");
                }
            }
        }
    }

    #[test]
    fn small_noise_decides_correctly() {
        let m = Modulation::Qam16;
        let s = m.modulate(&[1, 0, 0, 1]).unwrap()[0];
        let nudged = s + Complex64::new(0.9, -0.9) / 10f64.sqrt();
        assert_eq!(m.demodulate(&[nudged]), vec![1, 0, 0, 1]);
    }

    #[test]
    fn rejects_partial_symbol() {
        assert!(Modulation::Qam16.modulate(&[1, 0, 1]).is_err());
    }

    #[test]
    fn awgn_ber_matches_approximation() {
        let m = Modulation::Qam16;
        let es_n0 = 10f64.powf(1.5);
        let sigma = (1.0 / es_n0 / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bits = BitStream::random(4 * 400_000, &mut rng).bits;
        let rx: Vec<Complex64> = m
            .modulate(&bits)
            .unwrap()
            .into_iter()
            .map(|s| {
                let nr: f64 = StandardNormal.sample(&mut rng);
                let ni: f64 = StandardNormal.sample(&mut rng);
                s + Complex64::new(nr, ni) * sigma
            })
            .collect();
        let errors = m.demodulate(&rx).iter().zip(&bits).filter(|(a, b)| a != b).count();
        let ber = errors as f64 / bits.len() as f64;
        let approx = qam16_ber_approx(es_n0);
        assert!((ber / approx - 1.0).abs() < 0.2, "{ber} vs {approx}");
    }

    #[test]
    fn q_function_values() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-7);
        assert!((q_function(1.0) - 0.158_655_25).abs() < 1e-7);
        assert!((q_function(3.0) - 1.349_898e-3).abs() < 1e-8);
    }
}
