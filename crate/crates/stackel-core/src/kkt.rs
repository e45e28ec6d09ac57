//! Multiplier recovery and active-set detection for the lifted follower point
//! `w = (x, z, λ, μ)`.

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::linalg::{pinv_solve, Matrix, Vector};

/// Activity threshold on `|h_j(y, z)|`.
pub const EPS_ACT: f64 = 1e-6;
/// Multipliers at or below this are treated as zero.
pub const EPS_MULT: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct LiftedPoint {
    pub x: Vector,
    pub z: Vector,
    /// One multiplier per inequality constraint, in spec order.
    pub lambda: Vector,
    /// One multiplier per equality constraint, in spec order.
    pub mu: Vector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    /// Indices of active inequality constraints, ascending.
    pub active_ineq: Vec<usize>,
    /// Equality constraints are always active.
    pub n_eq: usize,
}

impl ActiveSet {
    pub fn contains(&self, j: usize) -> bool {
        self.active_ineq.binary_search(&j).is_ok()
    }

    /// FNV-1a hash of the active indices, stable across runs and platforms.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for &j in &self.active_ineq {
            for b in (j as u64).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Stationarity residual `‖−D + Σλ∇h + Σμ∇l‖_∞`.
pub fn stationarity_residual(spec: &GameSpec, y: &Vector, w: &LiftedPoint) -> f64 {
    let mut r = -spec.field(y, &w.x);
    for j in 0..spec.n_ineq() {
        if w.lambda[j] != 0.0 {
            for &(k, a) in &spec.ineq(j).x_coef {
                r[k] += w.lambda[j] * a;
            }
        }
    }
    for k in 0..spec.n_eq() {
        if w.mu[k] != 0.0 {
            for &(i, a) in &spec.eq(k).x_coef {
                r[i] += w.mu[k] * a;
            }
        }
    }
    crate::linalg::norm_inf(&r)
}

/// Largest `|λ_j h_j(y, z)|`.
pub fn complementarity_residual(spec: &GameSpec, y: &Vector, w: &LiftedPoint) -> f64 {
    spec.ineq_values(y, &w.z).iter().zip(w.lambda.iter()).map(|(h, l)| (h * l).abs()).fold(0.0, f64::max)
}

/// Least-squares multipliers for the stationarity system restricted to the
/// constraints active at `z`; inactive multipliers are exactly zero.
///
/// Columns that touch a single remaining row (bound constraints, typically)
/// are eliminated first: such a column can absorb its row exactly, so the row
/// drops out of the least-squares problem and the multiplier is recovered by
/// back substitution. The remaining system is solved with an SVD
/// pseudo-inverse. If that leaves a negative inequality multiplier, a linear
/// program looks for a sign-feasible alternative before giving up.
pub fn recover_multipliers(spec: &GameSpec, y: &Vector, x: &Vector, z: &Vector) -> Result<LiftedPoint> {
    let n = spec.n();
    let (p, q) = (spec.n_ineq(), spec.n_eq());
    let d = spec.field(y, x);
    let h = spec.ineq_values(y, z);
    let active: Vec<usize> = (0..p).filter(|&j| h[j].abs() <= EPS_ACT).collect();

    // Columns: active inequalities, then all equalities.
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(active.len() + q);
    for &j in &active {
        cols.push(spec.ineq(j).x_coef.clone());
    }
    for k in 0..q {
        cols.push(spec.eq(k).x_coef.clone());
    }
    let nc = cols.len();
    let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (c, col) in cols.iter().enumerate() {
        for &(r, _) in col {
            row_cols[r].push(c);
        }
    }
    let mut row_alive = vec![true; n];
    let mut col_alive = vec![true; nc];
    let mut col_count: Vec<usize> = cols.iter().map(|c| c.len()).collect();
    // (column, row) pairs in elimination order.
    let mut absorbed: Vec<(usize, usize)> = Vec::new();
    let mut stack: Vec<usize> = (0..nc).filter(|&c| col_count[c] == 1).collect();
    while let Some(c) = stack.pop() {
        if !col_alive[c] || col_count[c] != 1 {
            continue;
        }
        let r = match cols[c].iter().find(|&&(r, _)| row_alive[r]) {
            Some(&(r, _)) => r,
            None => continue,
        };
        col_alive[c] = false;
        row_alive[r] = false;
        absorbed.push((c, r));
        for &c2 in &row_cols[r] {
            if col_alive[c2] {
                col_count[c2] -= 1;
                if col_count[c2] == 1 {
                    stack.push(c2);
                }
            }
        }
    }
    let rows_left: Vec<usize> = (0..n).filter(|&r| row_alive[r]).collect();
    let cols_left: Vec<usize> = (0..nc).filter(|&c| col_alive[c] && col_count[c] > 0).collect();
    let mut rpos = vec![usize::MAX; n];
    for (a, &r) in rows_left.iter().enumerate() {
        rpos[r] = a;
    }
    let mut a_mat = Matrix::zeros(rows_left.len(), cols_left.len());
    for (b, &c) in cols_left.iter().enumerate() {
        for &(r, v) in &cols[c] {
            if rpos[r] != usize::MAX {
                a_mat[(rpos[r], b)] = v;
            }
        }
    }
    let rhs = Matrix::from_iterator(rows_left.len(), 1, rows_left.iter().map(|&r| d[r]));
    let sol = pinv_solve(&a_mat, &rhs);
    let mut nu = vec![0.0; nc];
    for (b, &c) in cols_left.iter().enumerate() {
        nu[c] = sol[(b, 0)];
    }
    // Back substitution, latest elimination first.
    for &(c, r) in absorbed.iter().rev() {
        let mut s = d[r];
        let mut coef = 0.0;
        for &c2 in &row_cols[r] {
            let v = cols[c2].iter().find(|e| e.0 == r).map(|e| e.1).unwrap_or(0.0);
            if c2 == c {
                coef = v;
            } else {
                s -= nu[c2] * v;
            }
        }
        nu[c] = s / coef;
    }
    // Dependent active columns leave the multipliers non-unique; the
    // least-squares choice may then have the wrong sign where another does not.
    if nu[..active.len()].iter().any(|&v| v < -EPS_MULT) {
        if let Some(v) = sign_feasible_multipliers(&cols, active.len(), &d) {
            nu = v;
        }
    }
    let mut lambda = Vector::zeros(p);
    for (a, &j) in active.iter().enumerate() {
        let v = nu[a];
        if v < -EPS_MULT {
            return Err(Error::SignViolation { index: j, value: v });
        }
        lambda[j] = if v > 0.0 { v } else { 0.0 };
    }
    let mu = Vector::from_iterator(q, (0..q).map(|k| nu[active.len() + k]));
    let w = LiftedPoint { x: x.clone(), z: z.clone(), lambda, mu };
    let res = stationarity_residual(spec, y, &w);
    if res > 1e-4 {
        return Err(Error::NotKkt { residual: res });
    }
    Ok(w)
}

/// Multipliers with the first `n_ineq` columns nonnegative minimizing
/// `‖Σ ν_c col_c − d‖_1`, by linear programming. Used when the active columns
/// are dependent and the least-squares choice has the wrong sign.
fn sign_feasible_multipliers(cols: &[Vec<(usize, f64)>], n_ineq: usize, d: &Vector) -> Option<Vec<f64>> {
    use microlp::{ComparisonOp, OptimizationDirection, Problem};
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = cols
        .iter()
        .enumerate()
        .map(|(c, _)| {
            if c < n_ineq {
                (lp.add_var(0.0, (0.0, f64::INFINITY)), None)
            } else {
                (lp.add_var(0.0, (0.0, f64::INFINITY)), Some(lp.add_var(0.0, (0.0, f64::INFINITY))))
            }
        })
        .collect();
    let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d.len()];
    for (c, col) in cols.iter().enumerate() {
        for &(r, a) in col {
            by_row[r].push((c, a));
        }
    }
    for (r, row) in by_row.iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let (sp, sm) = (lp.add_var(1.0, (0.0, f64::INFINITY)), lp.add_var(1.0, (0.0, f64::INFINITY)));
        let mut e = vec![(sp, 1.0), (sm, -1.0)];
        for &(c, a) in row {
            e.push((vars[c].0, a));
            if let Some(vm) = vars[c].1 {
                e.push((vm, -a));
            }
        }
        lp.add_constraint(e, ComparisonOp::Eq, d[r]);
    }
    let sol = lp.solve().ok()?.into_solution().ok()?;
    Some(vars.iter().map(|&(vp, vm)| sol.var_value(vp) - vm.map_or(0.0, |v| sol.var_value(v))).collect())
}

/// Inequalities with `|h_j(y, z)| <= eps_act`, plus every inequality carrying
/// a multiplier above `EPS_MULT`.
pub fn detect_active_set(spec: &GameSpec, y: &Vector, w: &LiftedPoint, eps_act: f64) -> ActiveSet {
    let h = spec.ineq_values(y, &w.z);
    let active_ineq = (0..spec.n_ineq()).filter(|&j| h[j].abs() <= eps_act || w.lambda[j] > EPS_MULT).collect();
    ActiveSet { active_ineq, n_eq: spec.n_eq() }
}
