//! Per-slot power allocation between the user beams and the sensing beam.
//!
//! Each slot maximizes the equivalent sensing power subject to every user's
//! SINR floor. Substituting the SINR and ESP expressions turns both slot
//! types into small linear programs in the allocation factors:
//!
//! ```text
//! maximize mᵀρ   s.t.  Gρ + n ≤ 0,  1ᵀρ = 1,  ρ ≥ 0
//! ```
//!
//! In a communications-for-sensing (C4S) slot `ρ` holds only the `P` user
//! shares; in a sensing (S4S) slot it holds the `P` user shares followed by
//! the sensing share.

pub mod simplex;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrayfield::{array_gain, esp, user_noise_term, user_sinr, PowerAllocation};
use crate::error::Result;
use crate::scenario::{classify_with_bounds, sector_bounds, ScanSchedule, SectorClass, SystemConfig, UserSpec};
use simplex::SimplexOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpKind {
    /// Variables `[ρ_c1 … ρ_cP]`, sensing share pinned to zero.
    C4S,
    /// Variables `[ρ_c1 … ρ_cP, ρ_s]`.
    S4S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub kind: LpKind,
    /// Objective coefficients `m`.
    pub objective: Vec<f64>,
    /// `P` rows of `G`.
    pub ineq_matrix: Vec<Vec<f64>>,
    /// Offsets `n` in `Gρ + n ≤ 0`.
    pub ineq_offset: Vec<f64>,
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// Largest violation of `Gρ + n ≤ 0`, `1ᵀρ = 1` and `ρ ≥ 0`, with SINR
    /// rows scaled by their offset.
    pub fn max_violation(&self, rho: &[f64]) -> f64 {
        let mut worst = (rho.iter().sum::<f64>() - 1.0).abs();
        for &r in rho {
            worst = worst.max(-r);
        }
        for (row, &off) in self.ineq_matrix.iter().zip(&self.ineq_offset) {
            let lhs: f64 = row.iter().zip(rho).map(|(g, r)| g * r).sum::<f64>() + off;
            worst = worst.max(lhs / off.abs().max(f64::MIN_POSITIVE));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    /// `None` when infeasible.
    pub alloc: Option<PowerAllocation>,
    pub objective_value: f64,
    pub status: LpStatus,
}

fn sinr_rows(
    users: &[UserSpec],
    config: &SystemConfig,
    sensing_column: Option<f64>,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let nt = config.n_tx as f64;
    let mut g = Vec::with_capacity(users.len());
    let mut n = Vec::with_capacity(users.len());
    for (ps, target) in users.iter().enumerate() {
        let eps = target.sinr_min;
        let mut row: Vec<f64> = users
            .iter()
            .enumerate()
            .map(|(p, u)| {
                if p == ps {
                    -nt * nt
                } else {
                    array_gain(target.angle, u.angle, config.n_tx, config) * eps
                }
            })
            .collect();
        if let Some(slot_angle) = sensing_column {
            row.push(array_gain(target.angle, slot_angle, config.n_tx, config) * eps);
        }
        g.push(row);
        n.push(eps * user_noise_term(target, config));
    }
    (g, n)
}

fn comm_objective(slot_angle: f64, users: &[UserSpec], config: &SystemConfig) -> Vec<f64> {
    let nt = config.n_tx as f64;
    let nr = config.n_rx as f64;
    users
        .iter()
        .map(|u| config.tx_power * nr * array_gain(slot_angle, u.angle, config.n_tx, config) / nt)
        .collect()
}

/// LP for a slot inside the protective sector of a user. The serving user
/// does not change the program; it only fixes the sensing share at zero.
pub fn build_c4s_lp(slot_angle: f64, users: &[UserSpec], config: &SystemConfig) -> LinearProgram {
    let (g, n) = sinr_rows(users, config, None);
    LinearProgram { kind: LpKind::C4S, objective: comm_objective(slot_angle, users, config), ineq_matrix: g, ineq_offset: n }
}

pub fn build_s4s_lp(slot_angle: f64, users: &[UserSpec], config: &SystemConfig) -> LinearProgram {
    let (g, n) = sinr_rows(users, config, Some(slot_angle));
    let mut objective = comm_objective(slot_angle, users, config);
    objective.push(config.tx_power * config.n_tx as f64 * config.n_rx as f64);
    LinearProgram { kind: LpKind::S4S, objective, ineq_matrix: g, ineq_offset: n }
}

fn to_allocation(kind: LpKind, rho: &[f64]) -> PowerAllocation {
    match kind {
        LpKind::C4S => PowerAllocation { rho_s: 0.0, rho_c: rho.to_vec() },
        LpKind::S4S => {
            let p = rho.len() - 1;
            PowerAllocation { rho_s: rho[p], rho_c: rho[..p].to_vec() }
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> AllocationSolution {
    let b_ub: Vec<f64> = lp.ineq_offset.iter().map(|v| -v).collect();
    let ones = vec![vec![1.0; lp.n_vars()]];
    match simplex::maximize(&lp.objective, &lp.ineq_matrix, &b_ub, &ones, &[1.0]) {
        SimplexOutcome::Optimal { x, value } => {
            // clean tiny negatives and renormalize the simplex sum
            let mut x: Vec<f64> = x.into_iter().map(|v| v.max(0.0)).collect();
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= s);
            let value = lp.objective.iter().zip(&x).map(|(m, r)| m * r).sum::<f64>().max(value.min(f64::MAX));
            AllocationSolution { alloc: Some(to_allocation(lp.kind, &x)), objective_value: value, status: LpStatus::Optimal }
        }
        // the feasible set is a bounded simplex slice, so unbounded cannot occur
        SimplexOutcome::Infeasible | SimplexOutcome::Unbounded => {
            AllocationSolution { alloc: None, objective_value: f64::NAN, status: LpStatus::Infeasible }
        }
    }
}

/// Fallback for over-constrained slots: no sensing beam, and the user
/// shares maximize the common ratio `t` with `SINR_p ≥ t·ε_p` for every
/// user. Each trial `t` is an LP feasibility problem; `t` is found by
/// bisection in log scale, so the result does not depend on a common
/// scaling of the thresholds.
pub fn best_effort_allocation(users: &[UserSpec], config: &SystemConfig) -> PowerAllocation {
    let p = users.len();
    let equal = PowerAllocation { rho_s: 0.0, rho_c: vec![1.0 / p as f64; p] };
    let nt2 = (config.n_tx as f64).powi(2);
    let feasible = |t: f64| -> Option<Vec<f64>> {
        let scaled: Vec<UserSpec> = users.iter().map(|u| UserSpec { sinr_min: u.sinr_min * t, ..u.clone() }).collect();
        let (g, n) = sinr_rows(&scaled, config, None);
        let b_ub: Vec<f64> = n.iter().map(|v| -v).collect();
        match simplex::maximize(&vec![0.0; p], &g, &b_ub, &[vec![1.0; p]], &[1.0]) {
            SimplexOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    };
    // no user can beat its interference-free full-power SINR
    let t_hi = users
        .iter()
        .map(|u| nt2 / (u.sinr_min * user_noise_term(u, config)))
        .fold(f64::INFINITY, f64::min);
    if !t_hi.is_finite() {
        return equal;
    }
    let (mut lo, mut hi) = ((t_hi * 1e-12).ln(), t_hi.ln());
    let Some(mut best) = feasible(lo.exp()) else { return equal };
    for _ in 0..80 {
        if hi - lo < 1e-10 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match feasible(mid.exp()) {
            Some(x) => {
                best = x;
                lo = mid;
            }
            None => hi = mid,
        }
    }
    let x: Vec<f64> = best.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = x.iter().sum();
    PowerAllocation { rho_s: 0.0, rho_c: x.iter().map(|v| v / s).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    Optimal,
    /// The SINR floors could not all be met; sensing is dropped and the
    /// users share power by max-min slack.
    BestEffort,
}

/// Solved allocation for one scan slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotPlan {
    pub slot: usize,
    pub angle: f64,
    pub sector: SectorClass,
    pub alloc: PowerAllocation,
    pub esp: f64,
    /// Linear SINR of each user.
    pub sinr: Vec<f64>,
    pub status: PlanStatus,
}

impl SlotPlan {
    /// Direction and share of the beam whose symbols the echo is divided by.
    pub fn illuminator(&self, users: &[UserSpec]) -> (f64, f64) {
        match self.sector {
            SectorClass::S4S => (self.angle, self.alloc.rho_s),
            SectorClass::C4S(p) => (users[p].angle, self.alloc.rho_c[p]),
        }
    }
}

pub fn plan_slot(slot: usize, angle: f64, sector: SectorClass, users: &[UserSpec], config: &SystemConfig) -> SlotPlan {
    let (alloc, status) = if users.is_empty() {
        (PowerAllocation::sensing_only(0), PlanStatus::Optimal)
    } else {
        let lp = match sector {
            SectorClass::S4S => build_s4s_lp(angle, users, config),
            SectorClass::C4S(_) => build_c4s_lp(angle, users, config),
        };
        let sol = solve_lp(&lp);
        match sol.alloc {
            Some(a) => (a, PlanStatus::Optimal),
            None => (best_effort_allocation(users, config), PlanStatus::BestEffort),
        }
    };
    let sinr = (0..users.len()).map(|p| user_sinr(p, &alloc, users, angle, config)).collect();
    SlotPlan { slot, angle, sector, esp: esp(&alloc, angle, users, config), alloc, sinr, status }
}

/// Solves every slot of the schedule; slots are independent and run in parallel.
pub fn allocate_schedule(schedule: &ScanSchedule, users: &[UserSpec], config: &SystemConfig) -> Result<Vec<SlotPlan>> {
    let bounds = sector_bounds(users, config)?;
    Ok(schedule
        .angles
        .par_iter()
        .enumerate()
        .map(|(q, &angle)| plan_slot(q, angle, classify_with_bounds(angle, &bounds), users, config))
        .collect())
}

/// Writes the per-slot allocation table as CSV.
pub fn write_allocation_csv<W: Write>(mut w: W, plans: &[SlotPlan]) -> std::io::Result<()> {
    let p = plans.first().map_or(0, |s| s.alloc.rho_c.len());
    let mut header = vec!["slot".to_string(), "theta_deg".into(), "sector".into(), "rho_s".into()];
    header.extend((1..=p).map(|i| format!("rho_c_{i}")));
    header.push("esp".into());
    header.extend((1..=p).map(|i| format!("sinr_db_{i}")));
    header.push("status".into());
    writeln!(w, "{}", header.join(","))?;
    for s in plans {
        let mut cells = vec![
            (s.slot + 1).to_string(),
            format!("{:.6}", s.angle.to_degrees()),
            s.sector.to_string(),
            format!("{:.9}", s.alloc.rho_s),
        ];
        cells.extend(s.alloc.rho_c.iter().map(|r| format!("{r:.9}")));
        cells.push(format!("{:.6e}", s.esp));
        cells.extend(s.sinr.iter().map(|v| format!("{:.4}", 10.0 * v.log10())));
        cells.push(match s.status {
            PlanStatus::Optimal => "optimal".into(),
            PlanStatus::BestEffort => "best_effort".into(),
        });
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scan_schedule, SystemConfig};

    fn cfg() -> SystemConfig {
        let mut c = SystemConfig::half_wavelength(32, 32, 100e9, 5e5, 16, 16);
        c.tx_power = 100.0;
        c.noise_var_user = 1e-12;
        c
    }

    fn db(x: f64) -> f64 {
        10f64.powf(x / 10.0)
    }

    #[test]
    fn c4s_structure() {
        let c = cfg();
        let users = vec![UserSpec::new(60.0, -0.5, db(20.0)), UserSpec::new(60.0, 0.4, db(20.0))];
        let lp = build_c4s_lp(0.4, &users, &c);
        assert_eq!(lp.n_vars(), 2);
        for p in 0..2 {
            assert_eq!(lp.ineq_matrix[p][p], -(32.0f64 * 32.0));
            assert!(lp.ineq_offset[p] > 0.0);
            let expected = c.tx_power * 32.0 * array_gain(0.4, users[p].angle, 32, &c) / 32.0;
            assert!((lp.objective[p] - expected).abs() <= 1e-12 * expected.max(1.0));
        }
        let sol = solve_lp(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.alloc.unwrap().rho_s, 0.0);
    }

    #[test]
    fn single_user_c4s_forced_to_full_power() {
        let c = cfg();
        let users = vec![UserSpec::new(60.0, 0.1, db(20.0))];
        let sol = solve_lp(&build_c4s_lp(0.1, &users, &c));
        let a = sol.alloc.unwrap();
        assert!((a.rho_c[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn s4s_last_column_and_objective() {
        let c = cfg();
        let users = vec![UserSpec::new(60.0, -0.5, db(20.0))];
        let lp = build_s4s_lp(0.3, &users, &c);
        assert_eq!(lp.n_vars(), 2);
        assert_eq!(*lp.objective.last().unwrap(), c.tx_power * 32.0 * 32.0);
        let expected = array_gain(-0.5, 0.3, 32, &c) * db(20.0);
        assert!((lp.ineq_matrix[0][1] - expected).abs() < 1e-9 * expected.max(1.0));
    }

    #[test]
    fn no_users_means_all_sensing() {
        let c = cfg();
        let plan = plan_slot(0, 0.2, SectorClass::S4S, &[], &c);
        assert_eq!(plan.alloc.rho_s, 1.0);
        assert!((plan.esp - c.tx_power * 32.0 * 32.0).abs() < 1e-9);
    }

    #[test]
    fn absurd_thresholds_are_infeasible_and_fall_back() {
        let c = cfg();
        let users = vec![UserSpec::new(60.0, -0.5, 1e9), UserSpec::new(60.0, 0.5, 1e9)];
        let sol = solve_lp(&build_s4s_lp(0.0, &users, &c));
        assert_eq!(sol.status, LpStatus::Infeasible);
        let plan = plan_slot(0, 0.0, SectorClass::S4S, &users, &c);
        assert_eq!(plan.status, PlanStatus::BestEffort);
        assert_eq!(plan.alloc.rho_s, 0.0);
        assert!((plan.alloc.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_plans_meet_constraints() {
        let mut c = cfg();
        c.n_slots = 40;
        let users = vec![
            UserSpec::new(60.0, (-40f64).to_radians(), db(25.0)),
            UserSpec::new(60.0, 0.0, db(27.0)),
            UserSpec::new(60.0, 30f64.to_radians(), db(30.0)),
        ];
        let plans = allocate_schedule(&build_scan_schedule(&c), &users, &c).unwrap();
        for plan in &plans {
            assert_eq!(plan.status, PlanStatus::Optimal);
            plan.alloc.validate().unwrap();
            for (p, u) in users.iter().enumerate() {
                assert!(plan.sinr[p] >= u.sinr_min * (1.0 - 1e-8), "slot {} user {p}", plan.slot);
            }
            if let SectorClass::C4S(_) = plan.sector {
                assert_eq!(plan.alloc.rho_s, 0.0);
            }
        }
        let mut buf = Vec::new();
        write_allocation_csv(&mut buf, &plans).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), plans.len() + 1);
        assert!(text.starts_with("slot,theta_deg,sector,rho_s,rho_c_1,rho_c_2,rho_c_3,esp,sinr_db_1"));
    }
}
