//! Oracles shared by the integration tests.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use isac_core::powalloc::{build_c4s_lp, build_s4s_lp, LinearProgram};
use isac_core::scenario::{classify_sector, sector_bounds, SectorClass, SystemConfig, UserSpec};

/// Best objective over the feasible set, searched exhaustively on a grid of
/// `step` in all coordinates but the last two, then again on a grid 200
/// times finer within two coarse steps of the best coarse point. Along the
/// remaining segment `x_{n-2} + x_{n-1} = rest` every constraint is an
/// interval and the objective is linear, so the segment is solved at its
/// endpoints.
pub fn grid_optimum(lp: &LinearProgram, step: f64) -> Option<f64> {
    let k = lp.n_vars().saturating_sub(2);
    let (coarse, centre) = grid_search(lp, &vec![0.0; k], step, (1.0 / step).round() as usize)?;
    if k == 0 {
        return Some(coarse);
    }
    let fine = step / 200.0;
    let origin: Vec<f64> = centre.iter().map(|c| (c - 2.0 * step).max(0.0)).collect();
    let refined = grid_search(lp, &origin, fine, 800).map_or(coarse, |(v, _)| v);
    Some(coarse.max(refined))
}

/// Exhaustive search over `origin + step·k` with `k` in `0..=ticks` per
/// head coordinate. Returns the best value and its head coordinates.
fn grid_search(lp: &LinearProgram, origin: &[f64], step: f64, ticks: usize) -> Option<(f64, Vec<f64>)> {
    let n = lp.n_vars();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut head = vec![0usize; origin.len()];
    loop {
        let x: Vec<f64> = head.iter().zip(origin).map(|(&k, o)| o + k as f64 * step).collect();
        let rest = 1.0 - x.iter().sum::<f64>();
        if rest >= -1e-12 {
            let value = if n == 1 {
                let x = [1.0];
                feasible(lp, &x).then(|| objective(lp, &x))
            } else {
                segment_optimum(lp, &x, rest.max(0.0))
            };
            if let Some(v) = value {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, x));
                }
            }
        }
        // odometer over the head coordinates
        let mut i = 0;
        loop {
            if i == head.len() {
                return best;
            }
            head[i] += 1;
            if head[i] <= ticks && origin.iter().zip(&head).map(|(o, &k)| o + k as f64 * step).sum::<f64>() <= 1.0 + 1e-12 {
                break;
            }
            head[i] = 0;
            i += 1;
        }
    }
}

fn objective(lp: &LinearProgram, x: &[f64]) -> f64 {
    lp.objective.iter().zip(x).map(|(m, v)| m * v).sum()
}

fn feasible(lp: &LinearProgram, x: &[f64]) -> bool {
    lp.ineq_matrix.iter().zip(&lp.ineq_offset).all(|(row, off)| {
        let lhs: f64 = row.iter().zip(x).map(|(g, v)| g * v).sum::<f64>() + off;
        lhs <= 1e-12 * off.abs()
    })
}

fn segment_optimum(lp: &LinearProgram, head: &[f64], rest: f64) -> Option<f64> {
    let k = head.len();
    let (mut lo, mut hi) = (0.0, rest);
    for (row, off) in lp.ineq_matrix.iter().zip(&lp.ineq_offset) {
        // row·x + off with x = [head, a, rest - a]
        let c0: f64 = row[..k].iter().zip(head).map(|(g, v)| g * v).sum::<f64>() + row[k + 1] * rest + off;
        let c1 = row[k] - row[k + 1];
        if c1 > 0.0 {
            hi = f64::min(hi, -c0 / c1);
        } else if c1 < 0.0 {
            lo = f64::max(lo, -c0 / c1);
        } else if c0 > 1e-12 * off.abs() {
            return None;
        }
    }
    if lo > hi {
        return None;
    }
    let value = |a: f64| {
        let mut x = head.to_vec();
        x.push(a);
        x.push(rest - a);
        objective(lp, &x)
    };
    Some(value(lo).max(value(hi)))
}

/// A random scene with 1 to 3 users on non-overlapping sectors, thresholds
/// and noise drawn so that most programs are feasible.
pub fn random_scene(rng: &mut ChaCha8Rng) -> (SystemConfig, Vec<UserSpec>, f64) {
    let n_tx = [8, 16, 32][rng.random_range(0..3)];
    let mut c = SystemConfig::half_wavelength(n_tx, n_tx, 28e9, 1e6, 16, 16);
    c.tx_power = rng.random_range(0.5..10.0);
    loop {
        let p = rng.random_range(1..=3);
        let users: Vec<UserSpec> = (0..p)
            .map(|_| {
                let mut u = UserSpec::new(
                    rng.random_range(20.0..120.0),
                    rng.random_range(-55f64..55.0).to_radians(),
                    10f64.powf(rng.random_range(0.0..2.0)),
                );
                let g = u.fading(&c);
                // full-power SNR between 20 and 40 dB
                let snr = 10f64.powf(rng.random_range(2.0..4.0));
                u.noise_var = Some(c.tx_power * g * g * n_tx as f64 / snr);
                u
            })
            .collect();
        if sector_bounds(&users, &c).is_err() {
            continue;
        }
        // half the slots near a user, the rest anywhere
        let slot = if rng.random_bool(0.5) {
            users[rng.random_range(0..p)].angle + rng.random_range(-0.05..0.05)
        } else {
            rng.random_range(-60f64..60.0).to_radians()
        };
        return (c, users, slot);
    }
}

pub fn lp_for(slot: f64, users: &[UserSpec], c: &SystemConfig) -> LinearProgram {
    match classify_sector(slot, users, c).unwrap() {
        SectorClass::S4S => build_s4s_lp(slot, users, c),
        SectorClass::C4S(_) => build_c4s_lp(slot, users, c),
    }
}
