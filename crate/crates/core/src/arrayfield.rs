//! Steering vectors, ULA gain patterns, analog beamformers, user SINR and
//! equivalent sensing power.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::scenario::{SystemConfig, UserSpec};

/// Array response of an `N`-element ULA.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub elements: Vec<Complex64>,
}

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `selfᴴ · other`
    pub fn inner(&self, other: &SteeringVector) -> Complex64 {
        self.elements.iter().zip(&other.elements).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.elements.iter().map(|e| e.norm_sqr()).sum()
    }
}

/// Element `n` carries phase `2π f0 n d sin θ / c`.
pub fn steering(theta: f64, n_ant: usize, config: &SystemConfig) -> SteeringVector {
    let step = 2.0 * config.array_phase_scale() * theta.sin();
    SteeringVector {
        elements: (0..n_ant).map(|n| Complex64::from_polar(1.0, step * n as f64)).collect(),
    }
}

pub fn steering_tx(theta: f64, config: &SystemConfig) -> SteeringVector {
    steering(theta, config.n_tx, config)
}

pub fn steering_rx(theta: f64, config: &SystemConfig) -> SteeringVector {
    steering(theta, config.n_rx, config)
}

/// Closed form of `a(θ1)ᴴ a(θ2)` for an `n_ant`-element ULA.
///
/// Equals `Σ_n exp(j n u)` with `u = 2π d f0 (sin θ2 − sin θ1) / c`.
pub fn array_factor(theta1: f64, theta2: f64, n_ant: usize, config: &SystemConfig) -> Complex64 {
    let ds = theta2.sin() - theta1.sin();
    dirichlet_sum(2.0 * config.array_phase_scale() * ds, n_ant)
}

/// `Σ_{n<len} exp(j n u)`, with the removable singularity handled exactly.
pub fn dirichlet_sum(u: f64, len: usize) -> Complex64 {
    let half = 0.5 * u;
    let denom = half.sin();
    let n = len as f64;
    if denom.abs() < 1e-12 {
        // u is a multiple of 2π, every term equals one
        return Complex64::new(n, 0.0);
    }
    let mag = (n * half).sin() / denom;
    Complex64::from_polar(1.0, (n - 1.0) * half) * mag
}

/// Power gain `|sin(N x) / sin x|²`, `x = π d f0 (sin θ1 − sin θ2) / c`.
///
/// Returns exactly `N²` when `|sin θ1 − sin θ2| < 1e-12`.
pub fn array_gain(theta1: f64, theta2: f64, n_ant: usize, config: &SystemConfig) -> f64 {
    let ds = theta1.sin() - theta2.sin();
    let n = n_ant as f64;
    if ds.abs() < 1e-12 {
        return n * n;
    }
    let x = config.array_phase_scale() * ds;
    let ratio = (n * x).sin() / x.sin();
    ratio * ratio
}

/// Per-slot power split between the sensing beam and the user beams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub rho_s: f64,
    pub rho_c: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(rho_s: f64, rho_c: Vec<f64>) -> Result<Self> {
        let a = Self { rho_s, rho_c };
        a.validate()?;
        Ok(a)
    }

    /// All power on the sensing beam.
    pub fn sensing_only(n_users: usize) -> Self {
        Self { rho_s: 1.0, rho_c: vec![0.0; n_users] }
    }

    pub fn total(&self) -> f64 {
        self.rho_s + self.rho_c.iter().sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho_s < 0.0 || self.rho_c.iter().any(|&r| r < 0.0) {
            return Err(IsacError::InvalidConfig("negative power allocation factor".into()));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(IsacError::InvalidConfig(format!(
                "allocation factors sum to {} instead of 1",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Interference-free noise term `N_T σ² / (P_t γ²)` of a user's SINR.
pub fn user_noise_term(user: &UserSpec, config: &SystemConfig) -> f64 {
    let g = user.fading(config);
    config.n_tx as f64 * user.noise_var(config) / (config.tx_power * g * g)
}

/// Linear SINR of user `p_star` while the sensing beam points at `slot_angle`.
pub fn user_sinr(
    p_star: usize,
    alloc: &PowerAllocation,
    users: &[UserSpec],
    slot_angle: f64,
    config: &SystemConfig,
) -> f64 {
    let target = &users[p_star];
    let nt = config.n_tx as f64;
    let mui: f64 = users
        .iter()
        .enumerate()
        .filter(|&(p, _)| p != p_star)
        .map(|(p, u)| alloc.rho_c[p] * array_gain(target.angle, u.angle, config.n_tx, config))
        .sum();
    let si = alloc.rho_s * array_gain(target.angle, slot_angle, config.n_tx, config);
    alloc.rho_c[p_star] * nt * nt / (mui + si + user_noise_term(target, config))
}

/// Equivalent sensing power toward `slot_angle`: the comm-beam share
/// `Σ ρ_c P_t N_R G(Θ, ϑ_p) / N_T` plus the sensing-beam share `ρ_s P_t N_T N_R`.
pub fn esp(alloc: &PowerAllocation, slot_angle: f64, users: &[UserSpec], config: &SystemConfig) -> f64 {
    let nt = config.n_tx as f64;
    let nr = config.n_rx as f64;
    let comm: f64 = users
        .iter()
        .zip(&alloc.rho_c)
        .map(|(u, &rho)| rho * config.tx_power * nr * array_gain(slot_angle, u.angle, config.n_tx, config) / nt)
        .sum();
    comm + alloc.rho_s * config.tx_power * nt * nr
}

/// Analog transmit beamformer `sqrt(ρ P_t / N_T) a_TX(θ)`.
pub fn tx_beamformer(theta: f64, rho: f64, config: &SystemConfig) -> SteeringVector {
    let scale = (rho * config.tx_power / config.n_tx as f64).sqrt();
    let mut v = steering_tx(theta, config);
    v.elements.iter_mut().for_each(|e| *e *= scale);
    v
}

/// Receive combiner `a_RX(Θ) / sqrt(N_R)`.
pub fn rx_combiner(theta: f64, config: &SystemConfig) -> SteeringVector {
    let scale = 1.0 / (config.n_rx as f64).sqrt();
    let mut v = steering_rx(theta, config);
    v.elements.iter_mut().for_each(|e| *e *= scale);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg(n: usize) -> SystemConfig {
        SystemConfig::half_wavelength(n, n, 220e9, 5e5, 16, 16)
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        let v = steering_tx(0.0, &cfg(16));
        assert!(v.elements.iter().all(|e| (*e - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn steering_phase_at_30_degrees() {
        let v = steering_tx(30f64.to_radians(), &cfg(16));
        assert_abs_diff_eq!(v.elements[1].arg(), std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(v.norm_sqr(), 16.0, epsilon = 1e-10);
    }

    #[test]
    fn gain_peak_and_first_null() {
        let c = cfg(64);
        assert_eq!(array_gain(0.3, 0.3, 64, &c), 4096.0);
        // sin θ1 − sin θ2 = c / (d f0 N_T) = 2/N_T for half-wavelength spacing
        let s2 = 0.2f64;
        let s1 = s2 + 3e8 / (c.spacing * c.f0 * 64.0);
        let g = array_gain(s1.asin(), s2.asin(), 64, &c);
        assert!(g < 1e-9, "first null gain {g}");
    }

    #[test]
    fn array_factor_matches_explicit_inner_product() {
        let c = cfg(24);
        for &(a, b) in &[(0.1, 0.4), (-0.7, 0.2), (0.5, 0.5), (0.0, -1.0)] {
            let explicit = steering_tx(a, &c).inner(&steering_tx(b, &c));
            let closed = array_factor(a, b, 24, &c);
            assert!((explicit - closed).norm() < 1e-9, "{a} {b}: {explicit} vs {closed}");
            assert_abs_diff_eq!(closed.norm_sqr(), array_gain(a, b, 24, &c), epsilon = 1e-8);
        }
    }

    #[test]
    fn single_user_sinr_without_interference() {
        let mut c = cfg(32);
        c.tx_power = 2.0;
        c.noise_var_user = 1e-9;
        let users = [UserSpec::new(50.0, 0.2, 10.0)];
        let alloc = PowerAllocation::new(0.0, vec![1.0]).unwrap();
        let g = users[0].fading(&c);
        let expected = 32.0 * c.tx_power * g * g / c.noise_var_user;
        assert_abs_diff_eq!(user_sinr(0, &alloc, &users, -0.5, &c) / expected, 1.0, epsilon = 1e-12);
        let off = PowerAllocation::new(1.0, vec![0.0]).unwrap();
        assert_eq!(user_sinr(0, &off, &users, -0.5, &c), 0.0);
    }

    #[test]
    fn esp_limits() {
        let mut c = cfg(32);
        c.tx_power = 3.0;
        let users = [UserSpec::new(50.0, 0.2, 10.0)];
        let full = 3.0 * 32.0 * 32.0;
        assert_abs_diff_eq!(esp(&PowerAllocation::sensing_only(1), -0.3, &users, &c), full, epsilon = 1e-9);
        let comm = PowerAllocation::new(0.0, vec![1.0]).unwrap();
        assert_abs_diff_eq!(esp(&comm, 0.2, &users, &c), full, epsilon = 1e-9);
    }

    #[test]
    fn allocation_must_sum_to_one() {
        assert!(PowerAllocation::new(0.5, vec![0.4]).is_err());
        assert!(PowerAllocation::new(-0.1, vec![1.1]).is_err());
    }

    proptest! {
        #[test]
        fn gain_is_symmetric_and_bounded(a in -1.4f64..1.4, b in -1.4f64..1.4, n in 1usize..128) {
            let c = cfg(n.max(2));
            let g = array_gain(a, b, n, &c);
            prop_assert!((g - array_gain(b, a, n, &c)).abs() <= 1e-9 * (1.0 + g));
            prop_assert!(g <= (n * n) as f64 * (1.0 + 1e-12));
        }

        #[test]
        fn sinr_monotone_in_own_share(x in 0.0f64..0.5, dx in 0.0f64..0.5, slot in -1.0f64..1.0) {
            let c = cfg(32);
            let users = [UserSpec::new(40.0, -0.5, 10.0), UserSpec::new(70.0, 0.6, 10.0)];
            let lo = PowerAllocation { rho_s: 0.3, rho_c: vec![x, 0.2] };
            let hi = PowerAllocation { rho_s: 0.3, rho_c: vec![x + dx, 0.2] };
            prop_assert!(user_sinr(0, &hi, &users, slot, &c) >= user_sinr(0, &lo, &users, slot, &c));
        }
    }
}
