//! Euclidean projection and linear minimization over convex polytopes.
//!
//! A polytope is stored as sparse rows plus coordinate bounds. At construction
//! the rows are sorted into three kinds:
//!
//! * single-coordinate rows, folded into the bounds;
//! * "groups": rows whose supports are disjoint from every other group, projected
//!   exactly by a one-dimensional multiplier search over sorted breakpoints;
//! * everything else, handled by a semismooth Newton method on the dual of the
//!   remaining rows, with the group projection as its inner map.
//!
//! Boxes, simplices and a single halfspace are all pure group/bound cases and
//! therefore projected in closed form.

use crate::error::{Error, Result};
use crate::linalg::{row_dot, Row, Vector};
use microlp::{ComparisonOp, OptimizationDirection, Problem};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const MAX_INNER_ITERS: usize = 10_000;
/// Absolute constraint tolerance used for membership tests.
pub const FEAS_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
struct Group {
    idx: Vec<usize>,
    a: Vec<f64>,
    rhs: f64,
    is_eq: bool,
}

#[derive(Clone, Debug)]
struct GeneralRow {
    row: Row,
    rhs: f64,
    is_eq: bool,
}

#[derive(Clone, Debug)]
struct Plan {
    lo: Vec<f64>,
    hi: Vec<f64>,
    groups: Vec<Group>,
    general: Vec<GeneralRow>,
    group_of: Vec<Option<usize>>,
}

/// Closed convex polyhedron `{x : A x <= b, E x = f, lo <= x <= hi}`.
#[derive(Clone, Debug)]
pub struct ConvexPolytope {
    dim: usize,
    ineq: Vec<Row>,
    ineq_rhs: Vec<f64>,
    eq: Vec<Row>,
    eq_rhs: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    plan: Plan,
}

#[derive(Clone, Debug)]
pub struct PolytopeBuilder {
    dim: usize,
    ineq: Vec<Row>,
    ineq_rhs: Vec<f64>,
    eq: Vec<Row>,
    eq_rhs: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PolytopeBuilder {
    pub fn bounds(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn lower(mut self, lo: f64) -> Self {
        self.lo = vec![lo; self.dim];
        self
    }

    pub fn upper(mut self, hi: f64) -> Self {
        self.hi = vec![hi; self.dim];
        self
    }

    /// Adds `row . x <= rhs`.
    pub fn le(mut self, row: Row, rhs: f64) -> Self {
        self.ineq.push(row);
        self.ineq_rhs.push(rhs);
        self
    }

    /// Adds `row . x = rhs`.
    pub fn eq(mut self, row: Row, rhs: f64) -> Self {
        self.eq.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn build(self) -> Result<ConvexPolytope> {
        ConvexPolytope::from_parts(self)
    }
}

fn normalize_row(row: &Row, dim: usize) -> Result<Row> {
    let mut r = row.clone();
    for &(j, a) in &r {
        if j >= dim {
            return Err(Error::config(format!("row index {j} out of range for dimension {dim}")));
        }
        if !a.is_finite() {
            return Err(Error::config("non-finite row coefficient"));
        }
    }
    r.sort_by_key(|e| e.0);
    let mut out: Row = Vec::with_capacity(r.len());
    for (j, a) in r {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    Ok(out)
}

impl ConvexPolytope {
    pub fn builder(dim: usize) -> PolytopeBuilder {
        PolytopeBuilder {
            dim,
            ineq: Vec::new(),
            ineq_rhs: Vec::new(),
            eq: Vec::new(),
            eq_rhs: Vec::new(),
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::builder(lo.len()).bounds(lo, hi).build()
    }

    /// The whole space `R^dim`.
    pub fn free(dim: usize) -> Self {
        Self::builder(dim).build().expect("free space is nonempty")
    }

    /// Builds from dense data; zero entries are dropped.
    pub fn from_dense(
        a: &crate::linalg::Matrix,
        b: &Vector,
        e: &crate::linalg::Matrix,
        f: &Vector,
        lo: Option<Vec<f64>>,
        hi: Option<Vec<f64>>,
    ) -> Result<Self> {
        let dim = a.ncols().max(e.ncols());
        let mut bld = Self::builder(dim);
        let dense_row =
            |m: &crate::linalg::Matrix, i: usize| -> Row { (0..m.ncols()).map(|j| (j, m[(i, j)])).collect() };
        for i in 0..a.nrows() {
            bld = bld.le(dense_row(a, i), b[i]);
        }
        for i in 0..e.nrows() {
            bld = bld.eq(dense_row(e, i), f[i]);
        }
        if let Some(lo) = lo {
            bld.lo = lo;
        }
        if let Some(hi) = hi {
            bld.hi = hi;
        }
        bld.build()
    }

    fn from_parts(b: PolytopeBuilder) -> Result<Self> {
        let dim = b.dim;
        if b.lo.len() != dim || b.hi.len() != dim {
            return Err(Error::config("bound vectors do not match the dimension"));
        }
        if b.lo.iter().chain(b.hi.iter()).any(|v| v.is_nan()) {
            return Err(Error::config("NaN bound"));
        }
        let mut ineq = Vec::new();
        let mut ineq_rhs = Vec::new();
        let mut eq = Vec::new();
        let mut eq_rhs = Vec::new();
        for (r, &rhs) in b.ineq.iter().zip(&b.ineq_rhs) {
            if !rhs.is_finite() {
                return Err(Error::config("non-finite right-hand side"));
            }
            ineq.push(normalize_row(r, dim)?);
            ineq_rhs.push(rhs);
        }
        for (r, &rhs) in b.eq.iter().zip(&b.eq_rhs) {
            if !rhs.is_finite() {
                return Err(Error::config("non-finite right-hand side"));
            }
            eq.push(normalize_row(r, dim)?);
            eq_rhs.push(rhs);
        }
        let plan = Self::make_plan(dim, &ineq, &ineq_rhs, &eq, &eq_rhs, &b.lo, &b.hi)?;
        let set = ConvexPolytope { dim, ineq, ineq_rhs, eq, eq_rhs, lo: b.lo, hi: b.hi, plan };
        set.check_nonempty()?;
        Ok(set)
    }

    fn make_plan(
        dim: usize,
        ineq: &[Row],
        ineq_rhs: &[f64],
        eq: &[Row],
        eq_rhs: &[f64],
        lo0: &[f64],
        hi0: &[f64],
    ) -> Result<Plan> {
        let mut lo = lo0.to_vec();
        let mut hi = hi0.to_vec();
        let mut rest: Vec<(Row, f64, bool)> = Vec::new();
        for (r, &rhs) in eq.iter().zip(eq_rhs) {
            match r.len() {
                0 if rhs.abs() <= FEAS_TOL => {}
                0 => return Err(Error::EmptySet),
                1 => {
                    let (j, a) = r[0];
                    lo[j] = lo[j].max(rhs / a);
                    hi[j] = hi[j].min(rhs / a);
                }
                _ => rest.push((r.clone(), rhs, true)),
            }
        }
        for (r, &rhs) in ineq.iter().zip(ineq_rhs) {
            match r.len() {
                0 if rhs >= -FEAS_TOL => {}
                0 => return Err(Error::EmptySet),
                1 => {
                    let (j, a) = r[0];
                    if a > 0.0 {
                        hi[j] = hi[j].min(rhs / a);
                    } else {
                        lo[j] = lo[j].max(rhs / a);
                    }
                }
                _ => rest.push((r.clone(), rhs, false)),
            }
        }
        for j in 0..dim {
            if lo[j] > hi[j] {
                if lo[j] - hi[j] <= FEAS_TOL * (1.0 + hi[j].abs()) {
                    let m = 0.5 * (lo[j] + hi[j]);
                    lo[j] = m;
                    hi[j] = m;
                } else {
                    return Err(Error::EmptySet);
                }
            }
        }
        let mut group_of = vec![None; dim];
        let mut groups = Vec::new();
        let mut general = Vec::new();
        for (row, rhs, is_eq) in rest {
            if row.iter().all(|&(j, _)| group_of[j].is_none()) {
                let g = groups.len();
                for &(j, _) in &row {
                    group_of[j] = Some(g);
                }
                groups.push(Group {
                    idx: row.iter().map(|e| e.0).collect(),
                    a: row.iter().map(|e| e.1).collect(),
                    rhs,
                    is_eq,
                });
            } else {
                general.push(GeneralRow { row, rhs, is_eq });
            }
        }
        Ok(Plan { lo, hi, groups, general, group_of })
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.plan.general.is_empty() {
            for g in &self.plan.groups {
                let (mut smin, mut smax) = (0.0, 0.0);
                for (k, &j) in g.idx.iter().enumerate() {
                    let (p, q) = (g.a[k] * self.plan.lo[j], g.a[k] * self.plan.hi[j]);
                    smin += if g.a[k] > 0.0 { p } else { q };
                    smax += if g.a[k] > 0.0 { q } else { p };
                }
                let slack = FEAS_TOL * (1.0 + g.rhs.abs());
                if smin > g.rhs + slack || (g.is_eq && smax < g.rhs - slack) {
                    return Err(Error::EmptySet);
                }
            }
            return Ok(());
        }
        self.solve_lp(&Vector::zeros(self.dim)).map(|_| ())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ineq_rows(&self) -> (&[Row], &[f64]) {
        (&self.ineq, &self.ineq_rhs)
    }

    pub fn eq_rows(&self) -> (&[Row], &[f64]) {
        (&self.eq, &self.eq_rhs)
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Largest constraint violation of `x` (0 when feasible).
    pub fn max_violation(&self, x: &Vector) -> f64 {
        let mut v: f64 = 0.0;
        for j in 0..self.dim {
            v = v.max(self.plan.lo[j] - x[j]).max(x[j] - self.plan.hi[j]);
        }
        for (r, &b) in self.ineq.iter().zip(&self.ineq_rhs) {
            v = v.max(row_dot(r, x) - b);
        }
        for (r, &f) in self.eq.iter().zip(&self.eq_rhs) {
            v = v.max((row_dot(r, x) - f).abs());
        }
        v
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim && self.max_violation(x) <= tol
    }

    /// True when the set is a product of intervals.
    pub fn is_box(&self) -> bool {
        self.plan.groups.is_empty() && self.plan.general.is_empty()
    }

    // ---- projection -------------------------------------------------------

    fn group_sum(g: &Group, w: &[f64], lo: &[f64], hi: &[f64], theta: f64) -> f64 {
        g.idx.iter().zip(&g.a).map(|(&j, &a)| a * (w[j] - theta * a).clamp(lo[j], hi[j])).sum()
    }

    fn group_slope(g: &Group, w: &[f64], lo: &[f64], hi: &[f64], theta: f64) -> f64 {
        g.idx
            .iter()
            .zip(&g.a)
            .map(|(&j, &a)| {
                let t = w[j] - theta * a;
                if t > lo[j] && t < hi[j] {
                    -a * a
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Multiplier of a single group constraint for input `w`.
    fn group_theta(g: &Group, w: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let s0 = Self::group_sum(g, w, lo, hi, 0.0);
        if !g.is_eq && s0 <= g.rhs {
            return 0.0;
        }
        let mut bp: Vec<f64> = Vec::with_capacity(2 * g.idx.len() + 1);
        for (&j, &a) in g.idx.iter().zip(&g.a) {
            for bound in [lo[j], hi[j]] {
                if bound.is_finite() {
                    let t = (w[j] - bound) / a;
                    if g.is_eq || t > 0.0 {
                        bp.push(t);
                    }
                }
            }
        }
        if !g.is_eq {
            bp.push(0.0);
        }
        bp.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        bp.dedup();
        let s = |t: f64| Self::group_sum(g, w, lo, hi, t);
        let rhs = g.rhs;
        if bp.is_empty() {
            let slope = Self::group_slope(g, w, lo, hi, 0.0);
            return if slope < 0.0 { (rhs - s0) / slope } else { 0.0 };
        }
        let first = bp[0];
        let s_first = s(first);
        if s_first < rhs {
            let slope = Self::group_slope(g, w, lo, hi, first - 1.0);
            return if slope < 0.0 { first + (rhs - s_first) / slope } else { first };
        }
        let last = bp[bp.len() - 1];
        let s_last = s(last);
        if s_last > rhs {
            let slope = Self::group_slope(g, w, lo, hi, last + 1.0);
            return if slope < 0.0 { last + (rhs - s_last) / slope } else { last };
        }
        // Invariant: s(bp[lo_k]) >= rhs >= s(bp[hi_k]).
        let (mut lo_k, mut hi_k) = (0usize, bp.len() - 1);
        let (mut s_lo, mut s_hi) = (s_first, s_last);
        while hi_k - lo_k > 1 {
            let mid = (lo_k + hi_k) / 2;
            let sm = s(bp[mid]);
            if sm >= rhs {
                lo_k = mid;
                s_lo = sm;
            } else {
                hi_k = mid;
                s_hi = sm;
            }
        }
        if s_lo == s_hi {
            return bp[lo_k];
        }
        bp[lo_k] + (s_lo - rhs) * (bp[hi_k] - bp[lo_k]) / (s_lo - s_hi)
    }

    /// Exact projection onto bounds intersected with the group rows.
    /// Returns the point and each group's multiplier.
    fn project_simple(&self, w: &Vector) -> (Vector, Vec<f64>) {
        let plan = &self.plan;
        let ws = w.as_slice();
        let mut u = Vector::zeros(self.dim);
        for j in 0..self.dim {
            if plan.group_of[j].is_none() {
                u[j] = w[j].clamp(plan.lo[j], plan.hi[j]);
            }
        }
        let mut thetas = Vec::with_capacity(plan.groups.len());
        for g in &plan.groups {
            let th = Self::group_theta(g, ws, &plan.lo, &plan.hi);
            for (&j, &a) in g.idx.iter().zip(&g.a) {
                u[j] = (w[j] - th * a).clamp(plan.lo[j], plan.hi[j]);
            }
            thetas.push(th);
        }
        (u, thetas)
    }

    /// Applies the generalized Jacobian of `project_simple` at `w` to `r` in place.
    fn apply_simple_jacobian(&self, w: &Vector, thetas: &[f64], r: &mut [f64]) {
        let plan = &self.plan;
        let free = |j: usize, t: f64| t > plan.lo[j] && t < plan.hi[j];
        for j in 0..self.dim {
            if plan.group_of[j].is_none() && !free(j, w[j]) {
                r[j] = 0.0;
            }
        }
        for (g, &th) in plan.groups.iter().zip(thetas) {
            let mut aa = 0.0;
            let mut ar = 0.0;
            for (&j, &a) in g.idx.iter().zip(&g.a) {
                if free(j, w[j] - th * a) {
                    aa += a * a;
                    ar += a * r[j];
                } else {
                    r[j] = 0.0;
                }
            }
            let active = g.is_eq || th > 0.0;
            if active && aa > 0.0 {
                let c = ar / aa;
                for (&j, &a) in g.idx.iter().zip(&g.a) {
                    if free(j, w[j] - th * a) {
                        r[j] -= c * a;
                    }
                }
            }
        }
    }

    /// Euclidean projection of `v` onto the set.
    pub fn project(&self, v: &Vector, tol: f64) -> Result<Vector> {
        if v.len() != self.dim {
            return Err(Error::config(format!("vector length {} != dimension {}", v.len(), self.dim)));
        }
        if self.plan.general.is_empty() {
            return Ok(self.project_simple(v).0);
        }
        self.project_dual(v, tol)
    }

    fn project_dual(&self, v: &Vector, tol: f64) -> Result<Vector> {
        let gen = &self.plan.general;
        let m = gen.len();
        let scale = 1.0 + crate::linalg::norm_inf(v) + gen.iter().fold(0.0_f64, |s, r| s.max(r.rhs.abs()));
        let target = (1e-2 * tol).max(1e-15 * scale);

        struct State {
            w: Vector,
            u: Vector,
            thetas: Vec<f64>,
            g: Vec<f64>,
            phi: f64,
        }
        let eval = |eta: &[f64]| -> State {
            let mut w = v.clone();
            for (r, &e) in gen.iter().zip(eta) {
                if e != 0.0 {
                    for &(j, a) in &r.row {
                        w[j] -= e * a;
                    }
                }
            }
            let (u, thetas) = self.project_simple(&w);
            let g: Vec<f64> = gen.iter().map(|r| row_dot(&r.row, &u) - r.rhs).collect();
            let phi = 0.5 * (&u - v).norm_squared() + eta.iter().zip(&g).map(|(e, gi)| e * gi).sum::<f64>();
            State { w, u, thetas, g, phi }
        };
        let residual = |eta: &[f64], g: &[f64]| -> f64 {
            gen.iter()
                .zip(eta.iter().zip(g))
                .map(|(r, (&e, &gi))| if r.is_eq { gi.abs() } else { e.min(-gi).abs() })
                .fold(0.0, f64::max)
        };
        let clip = |eta: &mut [f64]| {
            for (r, e) in gen.iter().zip(eta.iter_mut()) {
                if !r.is_eq && *e < 0.0 {
                    *e = 0.0;
                }
            }
        };

        let mut eta = vec![0.0; m];
        let mut st = eval(&eta);
        for _ in 0..MAX_INNER_ITERS {
            let res = residual(&eta, &st.g);
            if res <= target {
                return Ok(st.u);
            }
            let free: Vec<usize> = (0..m).filter(|&k| gen[k].is_eq || eta[k] > 0.0 || st.g[k] > 0.0).collect();
            let nf = free.len();
            // H = G_F P G_F^T with P the Jacobian of the inner projection.
            let mut pg: Vec<Vec<f64>> = Vec::with_capacity(nf);
            for &k in &free {
                let mut r = vec![0.0; self.dim];
                for &(j, a) in &gen[k].row {
                    r[j] = a;
                }
                self.apply_simple_jacobian(&st.w, &st.thetas, &mut r);
                pg.push(r);
            }
            let mut h = crate::linalg::Matrix::zeros(nf, nf);
            for a in 0..nf {
                for b in 0..nf {
                    h[(a, b)] = gen[free[b]].row.iter().map(|&(j, c)| pg[a][j] * c).sum();
                }
            }
            let hmax = (0..nf).fold(0.0_f64, |s, a| s.max(h[(a, a)]));
            let mut delta = 1e-12 * (1.0 + hmax) + 1e-8 * res.min(1.0);
            let rhs = Vector::from_iterator(nf, free.iter().map(|&k| st.g[k]));
            let dir_f = loop {
                let mut hr = h.clone();
                for a in 0..nf {
                    hr[(a, a)] += delta;
                }
                if let Some(ch) = hr.cholesky() {
                    break ch.solve(&rhs);
                }
                delta *= 100.0;
            };
            let mut dir = vec![0.0; m];
            for (a, &k) in free.iter().enumerate() {
                dir[k] = dir_f[a];
            }
            let mut accepted = false;
            for use_gradient in [false, true] {
                let d: Vec<f64> = if use_gradient { st.g.clone() } else { dir.clone() };
                let mut t = 1.0;
                for _ in 0..80 {
                    let mut cand: Vec<f64> = eta.iter().zip(&d).map(|(e, di)| e + t * di).collect();
                    clip(&mut cand);
                    let gain: f64 = cand.iter().zip(&eta).zip(&st.g).map(|((c, e), gi)| (c - e) * gi).sum();
                    if gain <= 0.0 {
                        t *= 0.5;
                        continue;
                    }
                    let cs = eval(&cand);
                    // Near the solution the dual gain drops below rounding in
                    // `phi`; halving the KKT residual also counts as progress.
                    let lost = gain <= 1e-12 * (1.0 + st.phi.abs());
                    if cs.phi >= st.phi + 1e-4 * gain || (lost && residual(&cand, &cs.g) <= 0.5 * res) {
                        eta = cand;
                        st = cs;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if accepted {
                    break;
                }
            }
            if !accepted {
                let res = residual(&eta, &st.g);
                if res <= tol {
                    return Ok(st.u);
                }
                return Err(Error::MaxIterations { context: "projection", best: st.u, residual: res });
            }
        }
        let res = residual(&eta, &st.g);
        Err(Error::MaxIterations { context: "projection", best: st.u, residual: res })
    }

    // ---- linear programs --------------------------------------------------

    fn solve_lp(&self, c: &Vector) -> Result<Vector> {
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        // microlp can stall on degenerate programs with doubly unbounded
        // variables, so those are split into positive and negative parts.
        let vars: Vec<_> = (0..self.dim)
            .map(|j| {
                let (lo, hi) = (self.plan.lo[j], self.plan.hi[j]);
                if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                    let vp = lp.add_var(c[j], (0.0, f64::INFINITY));
                    let vm = lp.add_var(-c[j], (0.0, f64::INFINITY));
                    (vp, Some(vm))
                } else {
                    (lp.add_var(c[j], (lo, hi)), None)
                }
            })
            .collect();
        let expr = |row: &mut dyn Iterator<Item = (usize, f64)>| {
            let mut e = Vec::new();
            for (j, a) in row {
                e.push((vars[j].0, a));
                if let Some(vm) = vars[j].1 {
                    e.push((vm, -a));
                }
            }
            e
        };
        for g in &self.plan.groups {
            let op = if g.is_eq { ComparisonOp::Eq } else { ComparisonOp::Le };
            lp.add_constraint(expr(&mut g.idx.iter().cloned().zip(g.a.iter().cloned())), op, g.rhs);
        }
        for r in &self.plan.general {
            let op = if r.is_eq { ComparisonOp::Eq } else { ComparisonOp::Le };
            lp.add_constraint(expr(&mut r.row.iter().cloned()), op, r.rhs);
        }
        match lp.solve() {
            Ok(outcome) => {
                let sol = outcome.into_solution().map_err(|e| Error::Lp(format!("{e:?}")))?;
                Ok(Vector::from_iterator(
                    self.dim,
                    vars.iter().map(|&(vp, vm)| sol.var_value(vp) - vm.map_or(0.0, |v| sol.var_value(v))),
                ))
            }
            Err(microlp::Error::Infeasible) => Err(Error::EmptySet),
            Err(microlp::Error::Unbounded) => Err(Error::Unbounded { ray: self.unbounded_ray(c)? }),
            Err(e) => Err(Error::Lp(e.to_string())),
        }
    }

    /// A recession direction `r` with `c . r < 0`, normalized to the unit box.
    fn unbounded_ray(&self, c: &Vector) -> Result<Vec<f64>> {
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = (0..self.dim)
            .map(|j| {
                let lo = if self.plan.lo[j].is_finite() { 0.0 } else { -1.0 };
                let hi = if self.plan.hi[j].is_finite() { 0.0 } else { 1.0 };
                lp.add_var(c[j], (lo, hi))
            })
            .collect();
        let rows = self
            .plan
            .groups
            .iter()
            .map(|g| (g.idx.iter().cloned().zip(g.a.iter().cloned()).collect::<Row>(), g.is_eq))
            .chain(self.plan.general.iter().map(|r| (r.row.clone(), r.is_eq)));
        for (row, is_eq) in rows {
            let expr: Vec<_> = row.iter().map(|&(j, a)| (vars[j], a)).collect();
            lp.add_constraint(expr, if is_eq { ComparisonOp::Eq } else { ComparisonOp::Le }, 0.0);
        }
        let sol = lp
            .solve()
            .map_err(|e| Error::Lp(e.to_string()))?
            .into_solution()
            .map_err(|e| Error::Lp(format!("{e:?}")))?;
        Ok(vars.iter().map(|&v| sol.var_value(v)).collect())
    }

    /// A minimizer of `c . x` over the set. Ties are resolved by the simplex
    /// solver's deterministic pivoting.
    pub fn linear_minimize(&self, c: &Vector) -> Result<Vector> {
        if c.len() != self.dim {
            return Err(Error::config("cost vector length does not match the dimension"));
        }
        self.solve_lp(c)
    }

    // ---- vertex enumeration ----------------------------------------------

    /// All vertices when the set is small enough to enumerate, else `None`.
    /// `limit` caps the number of vertices returned.
    pub fn vertices(&self, limit: usize) -> Option<Vec<Vector>> {
        let d = self.dim;
        let mut eq_rows: Vec<(Row, f64)> = Vec::new();
        let mut cand: Vec<(Row, f64)> = Vec::new();
        for g in &self.plan.groups {
            let row: Row = g.idx.iter().cloned().zip(g.a.iter().cloned()).collect();
            if g.is_eq {
                eq_rows.push((row, g.rhs))
            } else {
                cand.push((row, g.rhs))
            }
        }
        for r in &self.plan.general {
            if r.is_eq {
                eq_rows.push((r.row.clone(), r.rhs))
            } else {
                cand.push((r.row.clone(), r.rhs))
            }
        }
        for j in 0..d {
            if self.plan.lo[j] == self.plan.hi[j] {
                eq_rows.push((vec![(j, 1.0)], self.plan.lo[j]));
                continue;
            }
            if self.plan.lo[j].is_finite() {
                cand.push((vec![(j, -1.0)], -self.plan.lo[j]));
            }
            if self.plan.hi[j].is_finite() {
                cand.push((vec![(j, 1.0)], self.plan.hi[j]));
            }
        }
        let dense = |rows: &[&(Row, f64)]| {
            let mut m = crate::linalg::Matrix::zeros(rows.len(), d);
            let mut b = crate::linalg::Matrix::zeros(rows.len(), 1);
            for (i, (r, rhs)) in rows.iter().enumerate() {
                for &(j, a) in r {
                    m[(i, j)] = a;
                }
                b[(i, 0)] = *rhs;
            }
            (m, b)
        };
        let eq_refs: Vec<&(Row, f64)> = eq_rows.iter().collect();
        let rank_e = if eq_refs.is_empty() { 0 } else { dense(&eq_refs).0.rank(1e-10) };
        if rank_e > d {
            return None;
        }
        let k = d - rank_e;
        let m = cand.len();
        if k > m {
            return Some(Vec::new());
        }
        let combos = binomial(m, k);
        if combos > 200_000.0 {
            return None;
        }
        let mut out: Vec<Vector> = Vec::new();
        let mut pick: Vec<usize> = (0..k).collect();
        loop {
            let mut rows = eq_refs.clone();
            rows.extend(pick.iter().map(|&i| &cand[i]));
            let (mat, rhs) = dense(&rows);
            if mat.rank(1e-10) == d {
                let x = crate::linalg::pinv_solve(&mat, &rhs).column(0).into_owned();
                let fit = (&mat * &x - rhs.column(0)).abs().max();
                if fit <= 1e-9 && self.contains(&x, 1e-9) && !out.iter().any(|v| (v - &x).abs().max() <= 1e-9) {
                    if out.len() == limit {
                        return None;
                    }
                    out.push(x);
                }
            }
            if !next_combination(&mut pick, m) {
                break;
            }
        }
        Some(out)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn next_combination(pick: &mut [usize], n: usize) -> bool {
    let k = pick.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if pick[i] < n - k + i {
            pick[i] += 1;
            for j in i + 1..k {
                pick[j] = pick[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn simplex(d: usize) -> ConvexPolytope {
        ConvexPolytope::builder(d).lower(0.0).eq((0..d).map(|j| (j, 1.0)).collect(), 1.0).build().unwrap()
    }

    #[test]
    fn box_projection_clamps() {
        let set = ConvexPolytope::boxed(vec![1.0; 3], vec![20.0; 3]).unwrap();
        let p = set.project(&v(&[0.5, 25.0, 7.0]), DEFAULT_TOL).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 20.0, 7.0]);
    }

    #[test]
    fn simplex_projection_of_symmetric_point() {
        let p = simplex(3).project(&v(&[0.5, 0.5, 0.5]), DEFAULT_TOL).unwrap();
        for x in p.iter() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn halfspace_projection_closed_form() {
        let set = ConvexPolytope::builder(2).le(vec![(0, 1.0), (1, 1.0)], 20.0).build().unwrap();
        let p = set.project(&v(&[15.0, 15.0]), DEFAULT_TOL).unwrap();
        assert!((p[0] - 10.0).abs() < 1e-12 && (p[1] - 10.0).abs() < 1e-12);
        let inside = set.project(&v(&[3.0, -4.0]), DEFAULT_TOL).unwrap();
        assert_eq!(inside.as_slice(), &[3.0, -4.0]);
    }

    #[test]
    fn linear_minimize_examples() {
        let x = simplex(3).linear_minimize(&v(&[3.0, 1.0, 2.0])).unwrap();
        assert!((x - v(&[0.0, 1.0, 0.0])).norm() < 1e-9);
        let bx = ConvexPolytope::boxed(vec![0.0; 2], vec![1.0; 2]).unwrap();
        let x = bx.linear_minimize(&v(&[-1.0, 1.0])).unwrap();
        assert!((x - v(&[1.0, 0.0])).norm() < 1e-9);
        let hs = ConvexPolytope::builder(2).le(vec![(0, 1.0), (1, 1.0)], 20.0).build().unwrap();
        let x = hs.linear_minimize(&v(&[-1.0, -1.0])).unwrap();
        assert!((x[0] + x[1] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_lp_reports_ray() {
        let hs = ConvexPolytope::builder(2).le(vec![(0, 1.0), (1, 1.0)], 20.0).build().unwrap();
        match hs.linear_minimize(&v(&[-1.0, 0.0])) {
            Err(Error::Unbounded { ray }) => {
                assert!(ray[0] > 0.0);
                assert!(ray[0] + ray[1] <= 1e-12);
            }
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn empty_sets_are_rejected() {
        let r = ConvexPolytope::builder(2).lower(0.0).le(vec![(0, 1.0), (1, 1.0)], -1.0).build();
        assert!(matches!(r, Err(Error::EmptySet)));
        let r = ConvexPolytope::builder(2)
            .lower(0.0)
            .upper(1.0)
            .eq(vec![(0, 1.0), (1, 1.0)], 1.0)
            .le(vec![(0, 1.0), (1, 2.0)], 0.5)
            .le(vec![(0, 2.0), (1, 1.0)], 0.5)
            .build();
        assert!(matches!(r, Err(Error::EmptySet)));
    }

    #[test]
    fn coupled_rows_use_dual_newton() {
        // Two simplices coupled by a capacity row on the first coordinates.
        let set = ConvexPolytope::builder(4)
            .lower(0.0)
            .eq(vec![(0, 1.0), (1, 1.0)], 1.0)
            .eq(vec![(2, 1.0), (3, 1.0)], 1.0)
            .le(vec![(0, 1.0), (2, 1.0)], 0.5)
            .build()
            .unwrap();
        let p = set.project(&v(&[1.0, 0.0, 1.0, 0.0]), DEFAULT_TOL).unwrap();
        // By symmetry each first coordinate is 0.25.
        assert!((p - v(&[0.25, 0.75, 0.25, 0.75])).norm() < 1e-10);
    }

    #[test]
    fn vertices_of_square_and_simplex() {
        let sq = ConvexPolytope::boxed(vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert_eq!(sq.vertices(100).unwrap().len(), 4);
        let s = simplex(3).vertices(100).unwrap();
        assert_eq!(s.len(), 3);
    }
}
