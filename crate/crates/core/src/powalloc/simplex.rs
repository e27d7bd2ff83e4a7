//! Dense two-phase simplex for small linear programs in standard form
//!
//! ```text
//! maximize cᵀx  s.t.  A_ub x ≤ b_ub,  A_eq x = b_eq,  x ≥ 0
//! ```
//!
//! Pivoting uses Bland's rule, so degenerate problems terminate.

const EPS: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `rows × (cols + 1)`; the last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (r, line) in self.a.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                line[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Maximizes `cost · x` over the allowed columns. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> bool {
        let m = self.a.len();
        loop {
            // reduced cost d_j = c_j − c_Bᵀ B⁻¹ A_j
            let entering = (0..self.cols).filter(|&j| allowed(j)).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let d = cost[j] - (0..m).map(|r| cost[self.basis[r]] * self.a[r][j]).sum::<f64>();
                d > EPS * (1.0 + cost[j].abs())
            });
            let Some(col) = entering else { return true };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..m {
                let coef = self.a[r][col];
                if coef > EPS {
                    let ratio = self.a[r][self.cols] / coef;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - EPS || (ratio <= bratio + EPS && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    }
                }
            }
            match best {
                Some((row, _)) => self.pivot(row, col),
                None => return false,
            }
        }
    }
}

/// Solves the LP. Constraint rows are rescaled internally to unit max-norm.
pub fn maximize(c: &[f64], a_ub: &[Vec<f64>], b_ub: &[f64], a_eq: &[Vec<f64>], b_eq: &[f64]) -> SimplexOutcome {
    let n = c.len();
    let n_ub = a_ub.len();
    let n_eq = a_eq.len();
    let m = n_ub + n_eq;

    // rows as (coefficients, rhs, is_equality), scaled and with rhs ≥ 0
    let mut rows: Vec<(Vec<f64>, f64, bool, f64)> = Vec::with_capacity(m);
    for (coef, &rhs) in a_ub.iter().zip(b_ub) {
        rows.push(normalize(coef, rhs, false));
    }
    for (coef, &rhs) in a_eq.iter().zip(b_eq) {
        rows.push(normalize(coef, rhs, true));
    }

    // columns: x (n) | slack/surplus per ub row (n_ub) | artificial (m)
    let slack0 = n;
    let art0 = n + n_ub;
    let cols = n + n_ub + m;
    let mut a = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    for (r, (coef, rhs, is_eq, sign)) in rows.iter().enumerate() {
        a[r][..n].copy_from_slice(coef);
        a[r][cols] = *rhs;
        if !is_eq {
            // the original row was `≤`; after a sign flip it reads `≥`
            a[r][slack0 + r] = *sign;
        }
        if !is_eq && *sign > 0.0 {
            basis[r] = slack0 + r;
        } else {
            a[r][art0 + r] = 1.0;
            basis[r] = art0 + r;
        }
    }
    let mut t = Tableau { a, basis, cols };

    // phase 1: maximize −Σ artificials
    let mut phase1 = vec![0.0; cols];
    for r in 0..m {
        if t.basis[r] >= art0 {
            phase1[art0 + r] = -1.0;
        }
    }
    if phase1.iter().any(|&v| v != 0.0) {
        t.optimize(&phase1, &|_| true);
        let infeas: f64 = (0..m).filter(|&r| t.basis[r] >= art0).map(|r| t.a[r][cols]).sum();
        if infeas > 1e-9 {
            return SimplexOutcome::Infeasible;
        }
        // drive zero-level artificials out of the basis
        for r in 0..m {
            if t.basis[r] >= art0 {
                if let Some(col) = (0..art0).find(|&j| t.a[r][j].abs() > EPS) {
                    t.pivot(r, col);
                }
            }
        }
    }

    // phase 2
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    if !t.optimize(&cost, &|j| j < art0) {
        return SimplexOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = t.a[r][cols].max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    SimplexOutcome::Optimal { x, value }
}

fn normalize(coef: &[f64], rhs: f64, is_eq: bool) -> (Vec<f64>, f64, bool, f64) {
    let scale = coef.iter().fold(rhs.abs(), |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
    let row = coef.iter().map(|v| v * sign / scale).collect();
    (row, rhs * sign / scale, is_eq, sign)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimum(o: SimplexOutcome) -> (Vec<f64>, f64) {
        match o {
            SimplexOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn single_variable_equality() {
        let (x, v) = optimum(maximize(&[1.0], &[], &[], &[vec![1.0]], &[1.0]));
        assert!((x[0] - 1.0).abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let (x, v) = optimum(maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
            &[],
            &[],
        ));
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
        assert!((v - 36.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // max −x − y, x + y ≥ 2 (written −x − y ≤ −2), x ≤ 3
        let (x, v) = optimum(maximize(&[-1.0, -1.0], &[vec![-1.0, -1.0], vec![1.0, 0.0]], &[-2.0, 3.0], &[], &[]));
        assert!((x[0] + x[1] - 2.0).abs() < 1e-9);
        assert!((v + 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        assert_eq!(
            maximize(&[1.0], &[vec![1.0]], &[-1.0], &[], &[]),
            SimplexOutcome::Infeasible
        );
        assert_eq!(maximize(&[1.0, 0.0], &[vec![0.0, 1.0]], &[1.0], &[], &[]), SimplexOutcome::Unbounded);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        let (_, v) = optimum(maximize(
            &[1.0, 1.0, 1.0],
            &[vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]],
            &[1.0, 1.0, 1.0, 1.5],
            &[],
            &[],
        ));
        assert!((v - 1.5).abs() < 1e-9);
    }
}
