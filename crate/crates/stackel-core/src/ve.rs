//! Variational equilibrium of the followers' subgame by projected gradient
//! iteration `x ← proj_C(x + ρ D(y, x))`.
//!
//! Follower constraints are affine and jointly convex in `x`, so the feasible
//! region is the same polytope at every iterate and is built once per solve.
//! On the first iteration and every `polish_every` iterations after that, the
//! solver guesses the active set from the current iterate and solves the
//! resulting equality-constrained linear system, correcting the guess a few
//! times if the solution violates it. A polished point is accepted only if one further projected
//! step from it moves less than `stop_tol`, so the returned point is always a
//! fixed point of the projected map to the stated tolerance.

use crate::error::{Error, Result};
use crate::game::{residual_ve, GameSpec, Kind};
use crate::linalg::{solve_saddle, spectral_norm_estimate, Matrix, Triplets, Vector};
use crate::projection::{ConvexPolytope, DEFAULT_TOL};

#[derive(Clone, Debug)]
pub struct VEConfig {
    /// Step size `ρ`; `None` selects `1/L̂` with `L̂` a power-iteration estimate
    /// of the Lipschitz constant of `D`.
    pub step: Option<f64>,
    pub max_iter: usize,
    /// Threshold on `‖x^(k+1) − x^(k)‖`.
    pub stop_tol: f64,
    pub warm_start: Option<Vector>,
    pub polish: bool,
    pub polish_every: usize,
    pub proj_tol: f64,
}

impl Default for VEConfig {
    fn default() -> Self {
        Self {
            step: None,
            max_iter: 50_000,
            stop_tol: 1e-10,
            warm_start: None,
            polish: true,
            polish_every: 25,
            proj_tol: DEFAULT_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VEResult {
    pub x_star: Vector,
    pub iterations: usize,
    pub final_step_norm: f64,
    pub converged: bool,
    /// Step size in effect when the solve stopped.
    pub step: f64,
}

pub fn solve_ve(spec: &GameSpec, y: &Vector, cfg: &VEConfig) -> Result<VEResult> {
    let set = spec.follower_polytope(y)?;
    solve_ve_on(spec, &set, y, cfg)
}

/// As [`solve_ve`], reusing an already built feasible set.
pub fn solve_ve_on(spec: &GameSpec, set: &ConvexPolytope, y: &Vector, cfg: &VEConfig) -> Result<VEResult> {
    if cfg.stop_tol <= 0.0 || cfg.step.is_some_and(|s| s <= 0.0) {
        return Err(Error::config("VE step and stop tolerance must be positive"));
    }
    let mut x = match &cfg.warm_start {
        Some(w) => {
            spec.check_feasible(y, w)?;
            w.clone()
        }
        None => set.project(&Vector::zeros(spec.n()), cfg.proj_tol)?,
    };
    let mut rho = match cfg.step {
        Some(s) => s,
        None => {
            let l = spectral_norm_estimate(&spec.field_jac_x(y, &x), 50);
            if l > 0.0 {
                1.0 / l
            } else {
                1.0
            }
        }
    };
    let mut prev_step = f64::INFINITY;
    let mut growth = 0usize;
    let mut step = f64::INFINITY;
    for k in 1..=cfg.max_iter {
        let d = spec.field(y, &x);
        let xn = set.project(&(&x + &d * rho), cfg.proj_tol)?;
        step = (&xn - &x).norm();
        x = xn;
        if step < cfg.stop_tol {
            return Ok(VEResult { x_star: x, iterations: k, final_step_norm: step, converged: true, step: rho });
        }
        if step > prev_step * (1.0 + 1e-12) {
            growth += 1;
            if growth >= 20 {
                rho *= 0.5;
                growth = 0;
            }
        } else {
            growth = 0;
        }
        prev_step = step;
        if cfg.polish && (k == 1 || k % cfg.polish_every.max(1) == 0) {
            if let Some(xp) = polish(spec, set, y, &x) {
                let dp = spec.field(y, &xp);
                let xq = set.project(&(&xp + &dp * rho), cfg.proj_tol)?;
                let sq = (&xq - &xp).norm();
                if sq < cfg.stop_tol {
                    return Ok(VEResult {
                        x_star: xq,
                        iterations: k + 1,
                        final_step_norm: sq,
                        converged: true,
                        step: rho,
                    });
                }
                if sq < step {
                    x = xq;
                    prev_step = sq;
                }
            }
        }
    }
    Ok(VEResult { x_star: x, iterations: cfg.max_iter, final_step_norm: step, converged: false, step: rho })
}

/// Maximum working-set corrections per polish attempt.
const POLISH_ROUNDS: usize = 8;

/// Newton step on the KKT system of a working set of constraints held as
/// equalities, starting from the set active at `x`. Violated constraints are
/// added and wrong-signed multipliers dropped until the set is consistent;
/// `None` if that does not happen within [`POLISH_ROUNDS`].
fn polish(spec: &GameSpec, set: &ConvexPolytope, y: &Vector, x: &Vector) -> Option<Vector> {
    let cons = spec.constraints();
    let tol = |k: usize| 1e-9 * (1.0 + cons[k].rhs.abs());
    let mut working: Vec<bool> =
        cons.iter().enumerate().map(|(k, c)| c.kind == Kind::Eq || c.value(y, x) >= -tol(k)).collect();
    for _ in 0..POLISH_ROUNDS {
        let (xn, lam, rows, pinned_by) = newton_on(spec, y, x, &working)?;
        let mut changed = false;
        for (k, c) in cons.iter().enumerate() {
            if !working[k] && c.value(y, &xn) > tol(k) {
                working[k] = true;
                changed = true;
            }
        }
        for (b, &k) in rows.iter().enumerate() {
            if cons[k].kind == Kind::Ineq && lam[b] < -1e-10 {
                working[k] = false;
                changed = true;
            }
        }
        // Implied multipliers of pinned single-variable rows.
        let mut r = spec.field(y, &xn);
        for (b, &k) in rows.iter().enumerate() {
            for &(j, a) in &cons[k].x_coef {
                r[j] -= lam[b] * a;
            }
        }
        for (j, by) in pinned_by.iter().enumerate() {
            if let Some(k) = *by {
                let a = cons[k].x_coef[0].1;
                if cons[k].kind == Kind::Ineq && r[j] * a < -1e-9 * (1.0 + r[j].abs()) {
                    working[k] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            let ok = set.max_violation(&xn) <= 1e-10 * (1.0 + crate::linalg::norm_inf(&xn));
            return ok.then_some(xn);
        }
    }
    None
}

/// One Newton step from `x` with the `working` constraints as equalities.
/// Returns the new point, the multipliers of the multi-variable rows in
/// `rows`, those rows, and for each coordinate the single-variable row that
/// pins it, if any.
#[allow(clippy::type_complexity)]
fn newton_on(
    spec: &GameSpec,
    y: &Vector,
    x: &Vector,
    working: &[bool],
) -> Option<(Vector, Vector, Vec<usize>, Vec<Option<usize>>)> {
    let n = spec.n();
    let cons = spec.constraints();
    let mut pinned_by: Vec<Option<usize>> = vec![None; n];
    let mut dx = Vector::zeros(n);
    let mut rows: Vec<usize> = Vec::new();
    for (k, c) in cons.iter().enumerate() {
        if !working[k] {
            continue;
        }
        if let [(j, a)] = c.x_coef[..] {
            if pinned_by[j].is_none() {
                pinned_by[j] = Some(k);
                dx[j] = -c.value(y, x) / a;
            }
        } else {
            rows.push(k);
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| pinned_by[j].is_none()).collect();
    let mut pos = vec![usize::MAX; n];
    for (a, &j) in free.iter().enumerate() {
        pos[j] = a;
    }
    let (nf, na) = (free.len(), rows.len());
    let d = spec.field(y, x);
    let jac = spec.field_jac_x(y, x);
    let mut h = Triplets::new(nf, nf);
    let mut f = Matrix::from_fn(nf, 1, |a, _| -d[free[a]]);
    for &(r, c, v) in &jac.entries {
        if pos[r] == usize::MAX {
            continue;
        }
        if pos[c] != usize::MAX {
            h.push(pos[r], pos[c], v);
        } else {
            f[(pos[r], 0)] -= v * dx[c];
        }
    }
    let mut a_rows = Triplets::new(na, nf);
    let mut g = Matrix::zeros(na, 1);
    for (b, &k) in rows.iter().enumerate() {
        let c = &cons[k];
        g[(b, 0)] = -c.value(y, x);
        for &(j, a) in &c.x_coef {
            if pos[j] != usize::MAX {
                a_rows.push(b, pos[j], a);
            } else {
                g[(b, 0)] -= a * dx[j];
            }
        }
    }
    // `solve_saddle` returns `−λ` for `J dx − Aᵀλ = −D`.
    let (u, lam) = match solve_saddle(&h, &a_rows, &f, &g) {
        Some((u, v)) => (u.column(0).into_owned(), -v.column(0)),
        None => {
            let dim = nf + na;
            let mut k_mat = Matrix::zeros(dim, dim);
            k_mat.view_mut((0, 0), (nf, nf)).copy_from(&h.to_dense());
            let ad = a_rows.to_dense();
            k_mat.view_mut((0, nf), (nf, na)).copy_from(&(-ad.transpose()));
            k_mat.view_mut((nf, 0), (na, nf)).copy_from(&ad);
            let mut rhs = Vector::zeros(dim);
            rhs.rows_mut(0, nf).copy_from(&f.column(0));
            rhs.rows_mut(nf, na).copy_from(&g.column(0));
            let sol = k_mat.lu().solve(&rhs)?;
            (sol.rows(0, nf).into_owned(), sol.rows(nf, na).into_owned())
        }
    };
    if u.iter().chain(lam.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    for (a, &j) in free.iter().enumerate() {
        dx[j] = u[a];
    }
    Some((x + dx, lam, rows, pinned_by))
}

/// Returns `z = x_star` after checking the VI certificate
/// `D(y, x*)ᵀ(x* − z') ≥ −1e-6` at the linear minimizer `z'`.
pub fn recover_z(spec: &GameSpec, y: &Vector, x_star: &Vector) -> Result<Vector> {
    let r = residual_ve(spec, y, x_star)?;
    if r > 1e-6 {
        return Err(Error::NotEquilibrium { residual: r });
    }
    Ok(x_star.clone())
}

/// Same check on a prebuilt feasible set.
pub fn recover_z_on(spec: &GameSpec, set: &ConvexPolytope, y: &Vector, x_star: &Vector) -> Result<Vector> {
    spec.check_feasible(y, x_star)?;
    let r = crate::game::ve_residual_on(spec, set, y, x_star)?;
    if r > 1e-6 {
        return Err(Error::NotEquilibrium { residual: r });
    }
    Ok(x_star.clone())
}
