//! Implicit differentiation of the lifted follower solution `w(y)`.
//!
//! The lifted follower maximizes `f_F(y, w) = D(y, x)ᵀ(x − z)` over the KKT set
//! of the inner linear program. Treating the active rows as equalities,
//! differentiating the Lagrangian stationarity and the active rows gives the
//! symmetric bordered system
//!
//! ```text
//! [ -M_FF  M_Fᵀ ] [ dw/dy ]   [  M_LF ]
//! [  M_F   0    ] [ dν/dy ] = [ -M_L  ]
//! ```
//!
//! whose solution equals the Schur-complement expression
//! `M_FF⁻¹M_Fᵀ(M_F M_FF⁻¹ M_Fᵀ)⁻¹(M_F M_FF⁻¹ M_LF − M_L) − M_FF⁻¹M_LF` whenever
//! the inverses exist. `M_FF` of the lifted problem is always singular (the
//! objective does not depend on the multiplier blocks), and replacing its
//! inverse by a pseudo-inverse in the Schur form silently zeroes the
//! multiplier sensitivities. The bordered form is therefore what
//! [`implicit_gradient`] solves, with a pseudo-inverse for the rank-deficient
//! case; [`schur_gradient`] evaluates the Schur form literally.
//!
//! Derivatives use `x = z` (guaranteed at a converged lower level), which
//! removes every third-derivative term of the follower objectives.

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::kkt::{ActiveSet, LiftedPoint, EPS_MULT};
use crate::linalg::{norm_inf, pinv, pinv_solve, pinv_solve_symmetric, solve_saddle, Matrix, Triplets, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    /// `−D + Σλ∇h + Σμ∇l = 0`, one row per follower coordinate.
    Stationarity(usize),
    /// `λ_j h_j(y, z) = 0`.
    Complementarity(usize),
    /// Active `h_j(y, x) = 0`.
    IneqX(usize),
    /// Active `h_j(y, z) = 0`.
    IneqZ(usize),
    /// `λ_j = 0` for a zero multiplier.
    MultiplierZero(usize),
    EqX(usize),
    EqZ(usize),
}

/// Active-constraint matrices of the lifted problem at a KKT point.
#[derive(Clone, Debug)]
pub struct ActiveSystem {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub n_leader: usize,
    /// `∇_w` of the active rows, `q_F × n_w`.
    pub m_f: Triplets,
    /// `−∇²_{yw} f_F − Σν∇²_{yw} c`, `n_w × n_L`.
    pub m_lf: Triplets,
    /// `∇_y` of the active rows, `q_F × n_L`.
    pub m_l: Triplets,
    /// `−∇²_{ww} f_F − Σν∇²_{ww} c`, `n_w × n_w`.
    pub m_ff: Triplets,
    /// Multipliers `ν` of the lifted problem, one per active row.
    pub lagrange: Vector,
    pub rows: Vec<RowKind>,
}

impl ActiveSystem {
    /// Lifted dimension `2n + p + q`.
    pub fn n_w(&self) -> usize {
        2 * self.n + self.p + self.q
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn lambda_offset(&self) -> usize {
        2 * self.n
    }

    pub fn mu_offset(&self) -> usize {
        2 * self.n + self.p
    }
}

/// Gradient of the lifted objective `f_F = Dᵀ(x − z)` with respect to `w`.
pub fn lifted_objective_grad(spec: &GameSpec, y: &Vector, w: &LiftedPoint) -> Vector {
    let n = spec.n();
    let d = spec.field(y, &w.x);
    let jx = spec.field_jac_x(y, &w.x);
    let gx = jx.tr_mul_vec(&(&w.x - &w.z)) + &d;
    let mut g = Vector::zeros(2 * n + spec.n_ineq() + spec.n_eq());
    g.rows_mut(0, n).copy_from(&gx);
    g.rows_mut(n, n).copy_from(&(-d));
    g
}

pub fn build_active_system(spec: &GameSpec, y: &Vector, w: &LiftedPoint, act: &ActiveSet) -> Result<ActiveSystem> {
    let (n, p, q, nl) = (spec.n(), spec.n_ineq(), spec.n_eq(), spec.n_leader());
    let n_w = 2 * n + p + q;
    let (lo, mo) = (2 * n, 2 * n + p);
    let mut jx = spec.field_jac_x(y, &w.x);
    jx.compress();
    let mut jy = spec.field_jac_y(y, &w.x);
    jy.compress();
    let h = spec.ineq_values(y, &w.z);

    let mut rows: Vec<RowKind> = Vec::new();
    let mut mf: Vec<(usize, usize, f64)> = Vec::new();
    let mut ml: Vec<(usize, usize, f64)> = Vec::new();
    let mut nu: Vec<f64> = Vec::new();

    let r0 = rows.len();
    for a in 0..n {
        rows.push(RowKind::Stationarity(a));
        nu.push(0.0);
    }
    for &(r, c, v) in &jx.entries {
        mf.push((r0 + r, c, -v));
    }
    for &(r, c, v) in &jy.entries {
        ml.push((r0 + r, c, -v));
    }
    for j in 0..p {
        for &(a, g) in &spec.ineq(j).x_coef {
            mf.push((r0 + a, lo + j, g));
        }
    }
    for k in 0..q {
        for &(a, e) in &spec.eq(k).x_coef {
            mf.push((r0 + a, mo + k, e));
        }
    }
    for j in 0..p {
        let c = spec.ineq(j);
        let lam = w.lambda[j];
        let hj = if act.contains(j) { 0.0 } else { h[j] };
        if lam == 0.0 && hj == 0.0 {
            continue;
        }
        let r = rows.len();
        rows.push(RowKind::Complementarity(j));
        nu.push(0.0);
        if lam != 0.0 {
            for &(a, g) in &c.x_coef {
                mf.push((r, n + a, lam * g));
            }
            for &(b, g) in &c.y_coef {
                ml.push((r, b, lam * g));
            }
        }
        if hj != 0.0 {
            mf.push((r, lo + j, hj));
        }
    }
    for &j in &act.active_ineq {
        let c = spec.ineq(j);
        for (kind, off, sign) in [(RowKind::IneqX(j), 0, -1.0), (RowKind::IneqZ(j), n, 1.0)] {
            let r = rows.len();
            rows.push(kind);
            nu.push(sign * w.lambda[j]);
            for &(a, g) in &c.x_coef {
                mf.push((r, off + a, g));
            }
            for &(b, g) in &c.y_coef {
                ml.push((r, b, g));
            }
        }
    }
    for j in 0..p {
        if w.lambda[j] <= EPS_MULT {
            let r = rows.len();
            rows.push(RowKind::MultiplierZero(j));
            nu.push(0.0);
            mf.push((r, lo + j, 1.0));
        }
    }
    for k in 0..q {
        let c = spec.eq(k);
        for (kind, off, sign) in [(RowKind::EqX(k), 0, -1.0), (RowKind::EqZ(k), n, 1.0)] {
            let r = rows.len();
            rows.push(kind);
            nu.push(sign * w.mu[k]);
            for &(a, e) in &c.x_coef {
                mf.push((r, off + a, e));
            }
            for &(b, e) in &c.y_coef {
                ml.push((r, b, e));
            }
        }
    }
    let nr = rows.len();
    let mut m_f = Triplets { nrows: nr, ncols: n_w, entries: mf };
    m_f.compress();
    let mut m_l = Triplets { nrows: nr, ncols: nl, entries: ml };
    m_l.compress();

    let mut m_ff = Triplets::new(n_w, n_w);
    for &(r, c, v) in &jx.entries {
        m_ff.push(r, c, -v);
        m_ff.push(c, r, -v);
        m_ff.push(c, n + r, v);
        m_ff.push(n + r, c, v);
    }
    m_ff.compress();
    let mut m_lf = Triplets::new(n_w, nl);
    for &(r, c, v) in &jy.entries {
        m_lf.push(r, c, -v);
        m_lf.push(n + r, c, v);
    }
    m_lf.compress();

    let lagrange = Vector::from_vec(nu);
    let sys = ActiveSystem { n, p, q, n_leader: nl, m_f, m_lf, m_l, m_ff, lagrange, rows };
    let res = norm_inf(&(lifted_objective_grad(spec, y, w) + sys.m_f.tr_mul_vec(&sys.lagrange)));
    if res > 1e-5 || !res.is_finite() {
        return Err(Error::NotKkt { residual: res });
    }
    Ok(sys)
}

/// The symmetric bordered matrix and right-hand side of the sensitivity system.
fn bordered(sys: &ActiveSystem) -> (Triplets, Matrix) {
    let n_w = sys.n_w();
    let nr = sys.n_rows();
    let mut k = Triplets::new(n_w + nr, n_w + nr);
    k.push_block(0, 0, &sys.m_ff, -1.0);
    for &(r, c, v) in &sys.m_f.entries {
        k.push(n_w + r, c, v);
        k.push(c, n_w + r, v);
    }
    k.compress();
    let mut rhs = Matrix::zeros(n_w + nr, sys.n_leader);
    for &(r, c, v) in &sys.m_lf.entries {
        rhs[(r, c)] += v;
    }
    for &(r, c, v) in &sys.m_l.entries {
        rhs[(n_w + r, c)] -= v;
    }
    (k, rhs)
}

/// `dw/dy` through the bordered system, with exact structural presolve.
pub fn implicit_gradient(sys: &ActiveSystem) -> Matrix {
    implicit_gradient_with(sys, true)
}

/// As [`implicit_gradient`]; `presolve = false` forms and pseudo-inverts the
/// full dense bordered matrix.
pub fn implicit_gradient_with(sys: &ActiveSystem, presolve: bool) -> Matrix {
    let (k, rhs) = bordered(sys);
    let u = if presolve { solve_symmetric_presolved(&k, &rhs) } else { pinv_solve_symmetric(&k.to_dense(), &rhs) };
    u.rows(0, sys.n_w()).into_owned()
}

/// Pseudo-inverse solve of a symmetric sparse system after eliminating
/// structurally determined unknowns.
///
/// A row with a single remaining entry `K_ij` fixes `u_j`. By symmetry column
/// `i` then has a single remaining entry in row `j`, so row `j` only serves to
/// determine `u_i`; both pairs leave the system and `u_i` is substituted back
/// at the end. Rows that become empty belong to unknowns that appear nowhere
/// and are set to zero, as the minimum-norm solution would.
pub fn solve_symmetric_presolved(k: &Triplets, rhs: &Matrix) -> Matrix {
    let nn = k.nrows;
    let nc = rhs.ncols();
    let rows = k.rows();
    let mut alive = vec![true; nn];
    let mut count: Vec<usize> = rows.iter().map(|r| r.len()).collect();
    let mut r_eff = rhs.clone();
    let mut u = Matrix::zeros(nn, nc);
    let mut known = vec![false; nn];
    let mut backsub: Vec<(usize, usize)> = Vec::new();
    let mut queue: Vec<usize> = (0..nn).filter(|&i| count[i] <= 1).collect();

    // Fixing u_j moves column j to the right-hand side of every live row.
    fn fix(
        j: usize,
        val: &Matrix,
        rows: &[Vec<(usize, f64)>],
        alive: &[bool],
        count: &mut [usize],
        r_eff: &mut Matrix,
        queue: &mut Vec<usize>,
    ) {
        for &(kk, v) in &rows[j] {
            if alive[kk] {
                for c in 0..val.ncols() {
                    r_eff[(kk, c)] -= v * val[(0, c)];
                }
                count[kk] -= 1;
                if count[kk] <= 1 {
                    queue.push(kk);
                }
            }
        }
    }

    while let Some(i) = queue.pop() {
        if !alive[i] || count[i] > 1 {
            continue;
        }
        if count[i] == 0 {
            alive[i] = false;
            known[i] = true;
            continue;
        }
        let (j, kij) = *rows[i].iter().find(|&&(c, _)| alive[c] && !known[c]).expect("one live entry");
        let val = r_eff.row(i) / kij;
        alive[i] = false;
        if j == i {
            u.row_mut(i).copy_from(&val);
            known[i] = true;
            fix(i, &Matrix::from_rows(&[val]), &rows, &alive, &mut count, &mut r_eff, &mut queue);
            continue;
        }
        alive[j] = false;
        u.row_mut(j).copy_from(&val);
        known[j] = true;
        fix(j, &Matrix::from_rows(&[val]), &rows, &alive, &mut count, &mut r_eff, &mut queue);
        // Column i only meets row j among live rows; both leave together.
        backsub.push((i, j));
    }

    let rest: Vec<usize> = (0..nn).filter(|&i| alive[i]).collect();
    if !rest.is_empty() {
        let mut pos = vec![usize::MAX; nn];
        for (a, &i) in rest.iter().enumerate() {
            pos[i] = a;
        }
        let mut kd = Matrix::zeros(rest.len(), rest.len());
        let mut bd = Matrix::zeros(rest.len(), nc);
        for (a, &i) in rest.iter().enumerate() {
            for &(c, v) in &rows[i] {
                if pos[c] != usize::MAX {
                    kd[(a, pos[c])] = v;
                }
            }
            bd.row_mut(a).copy_from(&r_eff.row(i));
        }
        let sol = pinv_solve_symmetric(&kd, &bd);
        for (a, &i) in rest.iter().enumerate() {
            u.row_mut(i).copy_from(&sol.row(a));
        }
    }
    for &(i, j) in backsub.iter().rev() {
        let mut s = rhs.row(j).into_owned();
        let mut kji = 0.0;
        for &(c, v) in &rows[j] {
            if c == i {
                kji = v;
            } else {
                s -= u.row(c) * v;
            }
        }
        u.row_mut(i).copy_from(&(s / kji));
    }
    u
}

/// Literal Schur-complement form with every inverse replaced by an SVD
/// pseudo-inverse. Dense; intended for small well-conditioned systems.
pub fn schur_gradient(sys: &ActiveSystem) -> Matrix {
    let mff = sys.m_ff.to_dense();
    let mf = sys.m_f.to_dense();
    let mlf = sys.m_lf.to_dense();
    let ml = sys.m_l.to_dense();
    let hi = pinv(&mff);
    let kmat = &mf * &hi * mf.transpose();
    &hi * mf.transpose() * pinv(&kmat) * (&mf * &hi * &mlf - ml) - &hi * mlf
}

/// Schur form for explicitly given blocks (used to cross-check the bordered
/// solve on generic systems).
pub fn schur_gradient_dense(mff: &Matrix, mf: &Matrix, mlf: &Matrix, ml: &Matrix) -> Matrix {
    let hi = pinv(mff);
    let kmat = mf * &hi * mf.transpose();
    &hi * mf.transpose() * pinv(&kmat) * (mf * &hi * mlf - ml) - &hi * mlf
}

/// `dx/dy` from the follower VI's own active KKT system at `x = z`:
///
/// ```text
/// [ -∂D/∂x  Aᵀ ] [ dx ]   [  ∂D/∂y ]
/// [   A     0  ] [ dν ] = [ -A_y   ]
/// ```
///
/// with `A` the active rows held as equalities (the same rows the lifted
/// system keeps). Coordinates fixed by an active single-variable row are
/// eliminated first; the rest goes to [`solve_saddle`], with a dense
/// pseudo-inverse fallback when `∂D/∂x` has a singular diagonal block. The
/// result is the `x`-block of [`implicit_gradient`], `n × n_L`.
pub fn reduced_gradient(spec: &GameSpec, y: &Vector, w: &LiftedPoint, act: &ActiveSet) -> Matrix {
    let (n, nl) = (spec.n(), spec.n_leader());
    let mut rows: Vec<&crate::game::AffineConstraint> = act.active_ineq.iter().map(|&j| spec.ineq(j)).collect();
    rows.extend((0..spec.n_eq()).map(|k| spec.eq(k)));
    let y_row = |c: &crate::game::AffineConstraint| {
        let mut r = Vector::zeros(nl);
        for &(j, a) in &c.y_coef {
            r[j] += a;
        }
        r
    };
    let mut dx = Matrix::zeros(n, nl);
    let mut pinned = vec![false; n];
    let mut general = Vec::new();
    for c in rows {
        if let [(j, a)] = c.x_coef[..] {
            if !pinned[j] {
                pinned[j] = true;
                dx.row_mut(j).copy_from(&(-y_row(c) / a).transpose());
            }
        } else {
            general.push(c);
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| !pinned[j]).collect();
    if free.is_empty() {
        return dx;
    }
    let mut pos = vec![usize::MAX; n];
    for (i, &j) in free.iter().enumerate() {
        pos[j] = i;
    }
    let (nf, m) = (free.len(), general.len());
    let jx = spec.field_jac_x(y, &w.x);
    let jy = spec.field_jac_y(y, &w.x).to_dense();
    let mut h = Triplets::new(nf, nf);
    let mut f = Matrix::from_fn(nf, nl, |i, k| jy[(free[i], k)]);
    for &(r, c, v) in &jx.entries {
        if pos[r] == usize::MAX {
            continue;
        }
        if pos[c] != usize::MAX {
            h.push(pos[r], pos[c], -v);
        } else {
            for k in 0..nl {
                f[(pos[r], k)] += v * dx[(c, k)];
            }
        }
    }
    let mut a = Triplets::new(m, nf);
    let mut g = Matrix::zeros(m, nl);
    for (b, c) in general.iter().enumerate() {
        g.row_mut(b).copy_from(&(-y_row(c)).transpose());
        for &(j, v) in &c.x_coef {
            if pos[j] != usize::MAX {
                a.push(b, pos[j], v);
            } else {
                for k in 0..nl {
                    g[(b, k)] -= v * dx[(j, k)];
                }
            }
        }
    }
    let u = match solve_saddle(&h, &a, &f, &g) {
        Some((u, _)) => u,
        None => {
            let mut k = Triplets::new(nf + m, nf + m);
            k.push_block(0, 0, &h, 1.0);
            k.push_block(0, nf, &a.transpose(), 1.0);
            k.push_block(nf, 0, &a, 1.0);
            let mut rhs = Matrix::zeros(nf + m, nl);
            rhs.rows_mut(0, nf).copy_from(&f);
            rhs.rows_mut(nf, m).copy_from(&g);
            pinv_solve(&k.to_dense(), &rhs).rows(0, nf).into_owned()
        }
    };
    for (i, &j) in free.iter().enumerate() {
        dx.row_mut(j).copy_from(&u.row(i));
    }
    dx
}

/// Total derivative `df_L/dy = ∂_y f_L + (dx/dy)ᵀ ∂_x f_L`; the multiplier and
/// `z` blocks of `dw/dy` do not enter because `f_L` depends on `w` only
/// through `x`.
pub fn leader_total_gradient(spec: &GameSpec, y: &Vector, w: &LiftedPoint, dwdy: &Matrix) -> Vector {
    let n = spec.n();
    let gy = spec.leader().grad_y(y, &w.x);
    let gx = spec.leader().grad_x(y, &w.x);
    gy + dwdy.rows(0, n).transpose() * gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::{detect_active_set, recover_multipliers, EPS_ACT};
    use crate::problems::{build_charging_game, build_dispatch_game, generate_dispatch_instances, ChargingInstance};
    use crate::ve::{solve_ve, VEConfig};

    fn lifted_at(spec: &GameSpec, y: &Vector) -> (LiftedPoint, ActiveSet) {
        let ve = solve_ve(spec, y, &VEConfig::default()).unwrap();
        let w = recover_multipliers(spec, y, &ve.x_star, &ve.x_star).unwrap();
        let act = detect_active_set(spec, y, &w, EPS_ACT);
        (w, act)
    }

    fn routes_agree(spec: &GameSpec, y: &Vector) -> Matrix {
        let (w, act) = lifted_at(spec, y);
        let sys = build_active_system(spec, y, &w, &act).unwrap();
        let lifted = implicit_gradient(&sys);
        let full = implicit_gradient_with(&sys, false);
        let reduced = reduced_gradient(spec, y, &w, &act);
        let n = spec.n();
        let scale = 1.0 + reduced.amax();
        assert!((lifted.rows(0, n) - &reduced).amax() < 1e-8 * scale);
        assert!((full.rows(0, n) - &reduced).amax() < 1e-8 * scale);
        reduced
    }

    #[test]
    fn charging_interior_sensitivity_is_minus_inverse_slope() {
        let inst = ChargingInstance::new(vec![10.0, 8.0], vec![1.0, 2.0], 50.0);
        let spec = build_charging_game(&inst).unwrap();
        let dx = routes_agree(&spec, &Vector::from_element(1, 3.0));
        assert!((dx[(0, 0)] + 1.0).abs() < 1e-10 && (dx[(1, 0)] + 0.5).abs() < 1e-10, "{dx}");
    }

    #[test]
    fn charging_binding_sensitivity_vanishes() {
        let inst = ChargingInstance::new(vec![10.0, 8.0], vec![1.0, 2.0], 5.0);
        let spec = build_charging_game(&inst).unwrap();
        let y = Vector::from_element(1, 1.0);
        let (w, _) = lifted_at(&spec, &y);
        assert!((w.x[0] - 4.0).abs() < 1e-8 && (w.x[1] - 1.0).abs() < 1e-8);
        assert!((w.lambda[0] - 5.0).abs() < 1e-6, "{}", w.lambda);
        let dx = routes_agree(&spec, &y);
        assert!(dx.amax() < 1e-10, "{dx}");
    }

    #[test]
    fn dispatch_routes_agree() {
        let inst = generate_dispatch_instances(3, 6, 3, 1).remove(0);
        let spec = build_dispatch_game(&inst).unwrap();
        let mut y = inst.initial_point();
        y[0] -= 0.7;
        y[2] += 0.4;
        routes_agree(&spec, &y);
    }

    #[test]
    fn charging_total_gradient_closed_form() {
        // Revenue p Σ(b_i − p)/s_i has derivative B − 2pS.
        let inst = ChargingInstance::new(vec![10.0, 8.0], vec![1.0, 2.0], 50.0);
        let spec = build_charging_game(&inst).unwrap();
        let y = Vector::from_element(1, 3.0);
        let (w, act) = lifted_at(&spec, &y);
        let g = leader_total_gradient(&spec, &y, &w, &reduced_gradient(&spec, &y, &w, &act));
        assert!((g[0] - 5.0).abs() < 1e-9, "{}", g[0]);
    }

    #[test]
    fn schur_form_matches_bordered_when_invertible() {
        let mff = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let mf = Matrix::from_row_slice(1, 3, &[1.0, -1.0, 2.0]);
        let mlf = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, -1.0, 1.0]);
        let ml = Matrix::from_row_slice(1, 2, &[0.5, -0.5]);
        let schur = schur_gradient_dense(&mff, &mf, &mlf, &ml);
        let mut k = Matrix::zeros(4, 4);
        k.view_mut((0, 0), (3, 3)).copy_from(&(-&mff));
        k.view_mut((0, 3), (3, 1)).copy_from(&mf.transpose());
        k.view_mut((3, 0), (1, 3)).copy_from(&mf);
        let mut rhs = Matrix::zeros(4, 2);
        rhs.view_mut((0, 0), (3, 2)).copy_from(&mlf);
        rhs.view_mut((3, 0), (1, 2)).copy_from(&(-&ml));
        let bordered = k.lu().solve(&rhs).unwrap();
        assert!((bordered.rows(0, 3) - schur).amax() < 1e-12);
    }
}
