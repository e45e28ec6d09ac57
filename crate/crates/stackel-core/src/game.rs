//! Data model for single-leader multi-follower generalized Stackelberg games.
//!
//! The leader chooses `y` in a polytope `Ω_L`; follower `i` chooses its block
//! `x_i` of the stacked profile `x` and maximizes `f_i(y, x)` subject to joint
//! affine constraints `h(y, x) <= 0`, `l(y, x) = 0`. Constraints shared by
//! several followers are stored once, which is what makes the computed
//! equilibrium variational (one multiplier per shared constraint).

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{row_dot, Matrix, Row, Triplets, Vector};
use crate::projection::{ConvexPolytope, DEFAULT_TOL, FEAS_TOL};

/// Leader decision `y`.
pub type LeaderPoint = Vector;
/// Stacked follower decisions `(x_1, ..., x_N)`.
pub type FollowerProfile = Vector;

pub trait LeaderObjective: Send + Sync {
    fn value(&self, y: &Vector, x: &Vector) -> f64;
    fn grad_y(&self, y: &Vector, x: &Vector) -> Vector;
    fn grad_x(&self, y: &Vector, x: &Vector) -> Vector;
}

/// Objective of one follower, maximized over its own block.
pub trait FollowerObjective: Send + Sync {
    fn value(&self, y: &Vector, x: &Vector) -> f64;
    /// `∇_{x_i} f_i`, length `n_i`.
    fn grad_own(&self, y: &Vector, x: &Vector) -> Vector;
    /// `∇_x ∇_{x_i} f_i` as an `n_i × n` matrix.
    fn hess_x(&self, y: &Vector, x: &Vector) -> Triplets;
    /// `∇_y ∇_{x_i} f_i` as an `n_i × n_L` matrix.
    fn hess_y(&self, y: &Vector, x: &Vector) -> Triplets;
}

/// Optional whole-field evaluation, for problems where stacking the
/// per-follower callables repeats work.
pub trait BatchField: Send + Sync {
    fn field(&self, y: &Vector, x: &Vector) -> Vector;
    fn jac_x(&self, y: &Vector, x: &Vector) -> Triplets;
    fn jac_y(&self, y: &Vector, x: &Vector) -> Triplets;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Owner {
    Follower(usize),
    Shared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Ineq,
    Eq,
}

/// `x_coef . x + y_coef . y - rhs` compared against zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineConstraint {
    pub owner: Owner,
    pub kind: Kind,
    pub x_coef: Row,
    pub y_coef: Row,
    pub rhs: f64,
}

impl AffineConstraint {
    pub fn le(owner: Owner, x_coef: Row, rhs: f64) -> Self {
        Self { owner, kind: Kind::Ineq, x_coef, y_coef: Vec::new(), rhs }
    }

    pub fn eq(owner: Owner, x_coef: Row, rhs: f64) -> Self {
        Self { owner, kind: Kind::Eq, x_coef, y_coef: Vec::new(), rhs }
    }

    pub fn with_y(mut self, y_coef: Row) -> Self {
        self.y_coef = y_coef;
        self
    }

    pub fn value(&self, y: &Vector, x: &Vector) -> f64 {
        row_dot(&self.x_coef, x) + row_dot(&self.y_coef, y) - self.rhs
    }
}

pub struct GameSpec {
    n_leader: usize,
    follower_dims: Vec<usize>,
    offsets: Vec<usize>,
    leader: Arc<dyn LeaderObjective>,
    followers: Vec<Arc<dyn FollowerObjective>>,
    constraints: Vec<AffineConstraint>,
    ineq_idx: Vec<usize>,
    eq_idx: Vec<usize>,
    leader_set: ConvexPolytope,
    batch: Option<Arc<dyn BatchField>>,
    native_sign: f64,
}

impl std::fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GameSpec")
            .field("n_leader", &self.n_leader)
            .field("follower_dims", &self.follower_dims)
            .field("constraints", &self.constraints.len())
            .finish()
    }
}

pub struct GameBuilder {
    n_leader: usize,
    follower_dims: Vec<usize>,
    leader: Option<Arc<dyn LeaderObjective>>,
    followers: Vec<Arc<dyn FollowerObjective>>,
    constraints: Vec<AffineConstraint>,
    leader_set: Option<ConvexPolytope>,
    batch: Option<Arc<dyn BatchField>>,
    native_sign: f64,
}

impl GameBuilder {
    pub fn leader(mut self, obj: impl LeaderObjective + 'static) -> Self {
        self.leader = Some(Arc::new(obj));
        self
    }

    pub fn follower(mut self, obj: impl FollowerObjective + 'static) -> Self {
        self.followers.push(Arc::new(obj));
        self
    }

    pub fn constraint(mut self, c: AffineConstraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn leader_set(mut self, set: ConvexPolytope) -> Self {
        self.leader_set = Some(set);
        self
    }

    pub fn batch(mut self, b: impl BatchField + 'static) -> Self {
        self.batch = Some(Arc::new(b));
        self
    }

    /// Sign mapping the stored (maximized) leader objective back to the
    /// problem's own convention; `-1` for problems whose leader minimizes.
    pub fn native_sign(mut self, s: f64) -> Self {
        self.native_sign = s;
        self
    }

    pub fn build(self) -> Result<GameSpec> {
        let n_followers = self.follower_dims.len();
        if self.n_leader == 0 {
            return Err(Error::config("leader dimension must be positive"));
        }
        if n_followers == 0 {
            return Err(Error::config("at least one follower is required"));
        }
        for (i, &d) in self.follower_dims.iter().enumerate() {
            if d == 0 {
                return Err(Error::follower(i, "follower dimension must be positive"));
            }
        }
        if self.followers.len() != n_followers {
            return Err(Error::config(format!(
                "{} follower objectives for {} followers",
                self.followers.len(),
                n_followers
            )));
        }
        let leader = self.leader.ok_or_else(|| Error::config("missing leader objective"))?;
        let leader_set = self.leader_set.unwrap_or_else(|| ConvexPolytope::free(self.n_leader));
        if leader_set.dim() != self.n_leader {
            return Err(Error::config("leader set dimension does not match n_leader"));
        }
        let mut offsets = vec![0];
        for &d in &self.follower_dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        let n = *offsets.last().unwrap();
        // Private constraints in follower order, then shared ones.
        let mut constraints = self.constraints;
        for c in &constraints {
            if c.x_coef.iter().any(|&(j, _)| j >= n) || c.y_coef.iter().any(|&(j, _)| j >= self.n_leader) {
                return Err(Error::config("constraint coefficient index out of range"));
            }
            if let Owner::Follower(i) = c.owner {
                if i >= n_followers {
                    return Err(Error::config(format!("constraint owner {i} out of range")));
                }
                let blk = offsets[i]..offsets[i + 1];
                if c.x_coef.iter().any(|&(j, _)| !blk.contains(&j)) {
                    return Err(Error::follower(i, "private constraint touches another follower's block"));
                }
            }
        }
        constraints.sort_by_key(|c| match c.owner {
            Owner::Follower(i) => i,
            Owner::Shared => usize::MAX,
        });
        let ineq_idx = (0..constraints.len()).filter(|&k| constraints[k].kind == Kind::Ineq).collect();
        let eq_idx = (0..constraints.len()).filter(|&k| constraints[k].kind == Kind::Eq).collect();
        let spec = GameSpec {
            n_leader: self.n_leader,
            follower_dims: self.follower_dims,
            offsets,
            leader,
            followers: self.followers,
            constraints,
            ineq_idx,
            eq_idx,
            leader_set,
            batch: self.batch,
            native_sign: self.native_sign,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn check_triplets(t: &Triplets, rows: usize, cols: usize) -> bool {
    t.nrows == rows && t.ncols == cols && t.entries.iter().all(|&(r, c, v)| r < rows && c < cols && v.is_finite())
}

impl GameSpec {
    pub fn builder(n_leader: usize, follower_dims: Vec<usize>) -> GameBuilder {
        GameBuilder {
            n_leader,
            follower_dims,
            leader: None,
            followers: Vec::new(),
            constraints: Vec::new(),
            leader_set: None,
            batch: None,
            native_sign: 1.0,
        }
    }

    /// Evaluates every callable once at a probe point and checks the shapes.
    fn validate(&self) -> Result<()> {
        let y = self.leader_set.project(&Vector::zeros(self.n_leader), DEFAULT_TOL)?;
        let x = Vector::zeros(self.n());
        let (n, nl) = (self.n(), self.n_leader);
        for (i, f) in self.followers.iter().enumerate() {
            let ni = self.follower_dims[i];
            let g = f.grad_own(&y, &x);
            if g.len() != ni {
                return Err(Error::follower(i, format!("gradient has length {} (expected {ni})", g.len())));
            }
            if !check_triplets(&f.hess_x(&y, &x), ni, n) {
                return Err(Error::follower(i, format!("x-Hessian is not {ni}x{n}")));
            }
            if !check_triplets(&f.hess_y(&y, &x), ni, nl) {
                return Err(Error::follower(i, format!("y-Hessian is not {ni}x{nl}")));
            }
        }
        if self.leader.grad_y(&y, &x).len() != nl || self.leader.grad_x(&y, &x).len() != n {
            return Err(Error::config("leader gradient dimensions are inconsistent"));
        }
        if let Some(b) = &self.batch {
            if b.field(&y, &x).len() != n
                || !check_triplets(&b.jac_x(&y, &x), n, n)
                || !check_triplets(&b.jac_y(&y, &x), n, nl)
            {
                return Err(Error::config("batch gradient field dimensions are inconsistent"));
            }
        }
        Ok(())
    }

    pub fn n_leader(&self) -> usize {
        self.n_leader
    }

    pub fn n_followers(&self) -> usize {
        self.follower_dims.len()
    }

    pub fn follower_dims(&self) -> &[usize] {
        &self.follower_dims
    }

    /// Total follower dimension `n`.
    pub fn n(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn slice(&self, x: &Vector, i: usize) -> Vector {
        x.rows_range(self.block(i)).into_owned()
    }

    /// `x_{-i}`: every coordinate outside block `i`.
    pub fn except(&self, x: &Vector, i: usize) -> Vector {
        let b = self.block(i);
        Vector::from_iterator(self.n() - b.len(), (0..self.n()).filter(|j| !b.contains(j)).map(|j| x[j]))
    }

    /// `x` with block `i` replaced by `xi`.
    pub fn with_block(&self, x: &Vector, i: usize, xi: &Vector) -> Vector {
        let mut out = x.clone();
        out.rows_range_mut(self.block(i)).copy_from(xi);
        out
    }

    pub fn leader(&self) -> &dyn LeaderObjective {
        self.leader.as_ref()
    }

    pub fn follower(&self, i: usize) -> &dyn FollowerObjective {
        self.followers[i].as_ref()
    }

    pub fn leader_set(&self) -> &ConvexPolytope {
        &self.leader_set
    }

    pub fn native_sign(&self) -> f64 {
        self.native_sign
    }

    pub fn constraints(&self) -> &[AffineConstraint] {
        &self.constraints
    }

    /// Number of inequality constraints `p`.
    pub fn n_ineq(&self) -> usize {
        self.ineq_idx.len()
    }

    /// Number of equality constraints `q`.
    pub fn n_eq(&self) -> usize {
        self.eq_idx.len()
    }

    pub fn ineq(&self, j: usize) -> &AffineConstraint {
        &self.constraints[self.ineq_idx[j]]
    }

    pub fn eq(&self, k: usize) -> &AffineConstraint {
        &self.constraints[self.eq_idx[k]]
    }

    pub fn ineq_values(&self, y: &Vector, x: &Vector) -> Vec<f64> {
        (0..self.n_ineq()).map(|j| self.ineq(j).value(y, x)).collect()
    }

    pub fn eq_values(&self, y: &Vector, x: &Vector) -> Vec<f64> {
        (0..self.n_eq()).map(|k| self.eq(k).value(y, x)).collect()
    }

    pub fn follower_values(&self, y: &Vector, x: &Vector) -> Vec<f64> {
        self.followers.iter().map(|f| f.value(y, x)).collect()
    }

    /// Gradient field `D(y, x)`.
    pub fn field(&self, y: &Vector, x: &Vector) -> Vector {
        if let Some(b) = &self.batch {
            return b.field(y, x);
        }
        let mut d = Vector::zeros(self.n());
        for (i, f) in self.followers.iter().enumerate() {
            d.rows_range_mut(self.block(i)).copy_from(&f.grad_own(y, x));
        }
        d
    }

    /// `∂D/∂x`, `n × n`.
    pub fn field_jac_x(&self, y: &Vector, x: &Vector) -> Triplets {
        if let Some(b) = &self.batch {
            return b.jac_x(y, x);
        }
        let mut t = Triplets::new(self.n(), self.n());
        for (i, f) in self.followers.iter().enumerate() {
            t.push_block(self.offsets[i], 0, &f.hess_x(y, x), 1.0);
        }
        t
    }

    /// `∂D/∂y`, `n × n_L`.
    pub fn field_jac_y(&self, y: &Vector, x: &Vector) -> Triplets {
        if let Some(b) = &self.batch {
            return b.jac_y(y, x);
        }
        let mut t = Triplets::new(self.n(), self.n_leader);
        for (i, f) in self.followers.iter().enumerate() {
            t.push_block(self.offsets[i], 0, &f.hess_y(y, x), 1.0);
        }
        t
    }

    /// Index and size of the worst violated constraint (index over all
    /// constraints in storage order).
    pub fn max_violation(&self, y: &Vector, x: &Vector) -> (usize, f64) {
        let mut worst = (0, 0.0);
        for (k, c) in self.constraints.iter().enumerate() {
            let v = c.value(y, x);
            let viol = match c.kind {
                Kind::Ineq => v.max(0.0),
                Kind::Eq => v.abs(),
            };
            if viol > worst.1 {
                worst = (k, viol);
            }
        }
        worst
    }

    pub fn check_feasible(&self, y: &Vector, x: &Vector) -> Result<()> {
        if x.len() != self.n() || y.len() != self.n_leader {
            return Err(Error::config("point dimensions do not match the game"));
        }
        let (k, v) = self.max_violation(y, x);
        if v > FEAS_TOL {
            return Err(Error::Infeasible { constraint: k, violation: v });
        }
        Ok(())
    }

    /// Joint feasible set of `x` at fixed `y`.
    pub fn follower_polytope(&self, y: &Vector) -> Result<ConvexPolytope> {
        let mut b = ConvexPolytope::builder(self.n());
        for c in &self.constraints {
            let rhs = c.rhs - row_dot(&c.y_coef, y);
            b = match c.kind {
                Kind::Ineq => b.le(c.x_coef.clone(), rhs),
                Kind::Eq => b.eq(c.x_coef.clone(), rhs),
            };
        }
        b.build()
    }

    /// Feasible set of follower `i`'s block with `y` and `x_{-i}` held fixed.
    pub fn follower_slice(&self, y: &Vector, x: &Vector, i: usize) -> Result<ConvexPolytope> {
        let blk = self.block(i);
        let mut b = ConvexPolytope::builder(blk.len());
        for c in &self.constraints {
            let own: Row = c.x_coef.iter().filter(|(j, _)| blk.contains(j)).map(|&(j, a)| (j - blk.start, a)).collect();
            if own.is_empty() {
                continue;
            }
            let other: f64 = c.x_coef.iter().filter(|(j, _)| !blk.contains(j)).map(|&(j, a)| a * x[j]).sum();
            let rhs = c.rhs - row_dot(&c.y_coef, y) - other;
            b = match c.kind {
                Kind::Ineq => b.le(own, rhs),
                Kind::Eq => b.eq(own, rhs),
            };
        }
        b.build()
    }
}

/// Stacked own-block follower gradients, `D(y, x)`.
pub struct GradientField<'a> {
    spec: &'a GameSpec,
}

impl GradientField<'_> {
    pub fn evaluate(&self, y: &Vector, x: &Vector) -> Vector {
        self.spec.field(y, x)
    }

    pub fn jac_x(&self, y: &Vector, x: &Vector) -> Triplets {
        self.spec.field_jac_x(y, x)
    }

    pub fn jac_y(&self, y: &Vector, x: &Vector) -> Triplets {
        self.spec.field_jac_y(y, x)
    }
}

/// Checks dimensions and returns the gradient field of `spec`.
pub fn assemble_gradient_field(spec: &GameSpec) -> Result<GradientField<'_>> {
    spec.validate()?;
    Ok(GradientField { spec })
}

/// Sampling settings for [`residual_gne`].
#[derive(Clone, Debug)]
pub struct GneSampling {
    pub directions: usize,
    pub seed: u64,
    /// Vertices of a follower's slice are added when `n_i` is at most this.
    pub vertex_dim: usize,
}

impl Default for GneSampling {
    fn default() -> Self {
        Self { directions: 64, seed: 0, vertex_dim: 3 }
    }
}

/// Largest gain any follower obtains from a sampled feasible unilateral
/// deviation. A sampling check, not a certificate.
pub fn residual_gne(spec: &GameSpec, y: &Vector, x: &Vector, grid: &GneSampling) -> Result<f64> {
    spec.check_feasible(y, x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let radii = [1e-3, 1e-2, 1e-1, 1.0];
    let mut best: f64 = 0.0;
    for i in 0..spec.n_followers() {
        let slice = spec.follower_slice(y, x, i)?;
        let xi = spec.slice(x, i);
        let base = spec.follower(i).value(y, x);
        let scale = 1.0 + crate::linalg::norm_inf(&xi);
        let mut candidates = Vec::with_capacity(grid.directions + 8);
        for k in 0..grid.directions {
            let r = radii[k % radii.len()] * scale;
            let dir = Vector::from_fn(xi.len(), |_, _| rng.random_range(-1.0..=1.0));
            candidates.push(slice.project(&(&xi + dir * r), DEFAULT_TOL)?);
        }
        if xi.len() <= grid.vertex_dim {
            if let Some(vs) = slice.vertices(100) {
                candidates.extend(vs);
            }
        }
        for c in candidates {
            let gain = spec.follower(i).value(y, &spec.with_block(x, i, &c)) - base;
            best = best.max(gain);
        }
    }
    Ok(best)
}

/// `max(0, -min_z D(y,x)ᵀ(x - z))` over the joint feasible set; `+∞` when the
/// inner linear program is unbounded.
pub fn residual_ve(spec: &GameSpec, y: &Vector, x: &Vector) -> Result<f64> {
    spec.check_feasible(y, x)?;
    let set = spec.follower_polytope(y)?;
    ve_residual_on(spec, &set, y, x)
}

pub(crate) fn ve_residual_on(spec: &GameSpec, set: &ConvexPolytope, y: &Vector, x: &Vector) -> Result<f64> {
    let d = spec.field(y, x);
    match set.linear_minimize(&(-&d)) {
        Ok(z) => Ok(d.dot(&(z - x)).max(0.0)),
        Err(Error::Unbounded { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Minimum of `D(y,x)ᵀ(x - v)` over the enumerable vertices `v` of the joint
/// feasible set, or `None` when there are more than `limit` vertices.
pub fn vertex_vi_residual(spec: &GameSpec, y: &Vector, x: &Vector, limit: usize) -> Result<Option<f64>> {
    let set = spec.follower_polytope(y)?;
    let d = spec.field(y, x);
    Ok(set.vertices(limit).map(|vs| vs.iter().map(|v| d.dot(&(x - v))).fold(f64::INFINITY, f64::min)))
}

// ---- generic objectives ---------------------------------------------------

/// `f_i = ½ xᵀ P x + qᵀ x + xᵀ R y` with `P` symmetric; only the rows of the
/// owning block enter the gradient.
#[derive(Clone, Debug)]
pub struct QuadraticFollower {
    pub block: Range<usize>,
    pub p: Matrix,
    pub q: Vector,
    pub r: Matrix,
}

impl FollowerObjective for QuadraticFollower {
    fn value(&self, y: &Vector, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x) + x.dot(&(&self.r * y))
    }

    fn grad_own(&self, y: &Vector, x: &Vector) -> Vector {
        let g = &self.p * x + &self.q + &self.r * y;
        g.rows_range(self.block.clone()).into_owned()
    }

    fn hess_x(&self, _y: &Vector, _x: &Vector) -> Triplets {
        dense_rows(&self.p, self.block.clone())
    }

    fn hess_y(&self, _y: &Vector, _x: &Vector) -> Triplets {
        dense_rows(&self.r, self.block.clone())
    }
}

fn dense_rows(m: &Matrix, rows: Range<usize>) -> Triplets {
    let mut t = Triplets::new(rows.len(), m.ncols());
    for (a, r) in rows.enumerate() {
        for c in 0..m.ncols() {
            t.push(a, c, m[(r, c)]);
        }
    }
    t
}

/// `f_L = ½ sᵀ W s + wᵀ s` with `s = (y, x)` and `W` symmetric.
#[derive(Clone, Debug)]
pub struct QuadraticLeader {
    pub n_leader: usize,
    pub w2: Matrix,
    pub w1: Vector,
}

impl QuadraticLeader {
    fn stack(y: &Vector, x: &Vector) -> Vector {
        Vector::from_iterator(y.len() + x.len(), y.iter().chain(x.iter()).cloned())
    }

    fn grad(&self, y: &Vector, x: &Vector) -> Vector {
        &self.w2 * Self::stack(y, x) + &self.w1
    }
}

impl LeaderObjective for QuadraticLeader {
    fn value(&self, y: &Vector, x: &Vector) -> f64 {
        let s = Self::stack(y, x);
        0.5 * s.dot(&(&self.w2 * &s)) + self.w1.dot(&s)
    }

    fn grad_y(&self, y: &Vector, x: &Vector) -> Vector {
        self.grad(y, x).rows(0, self.n_leader).into_owned()
    }

    fn grad_x(&self, y: &Vector, x: &Vector) -> Vector {
        let g = self.grad(y, x);
        g.rows(self.n_leader, g.len() - self.n_leader).into_owned()
    }
}

/// Constant objective usable for either role.
#[derive(Clone, Debug)]
pub struct ConstantObjective {
    pub value: f64,
    pub own_dim: usize,
    pub n: usize,
    pub n_leader: usize,
}

impl FollowerObjective for ConstantObjective {
    fn value(&self, _y: &Vector, _x: &Vector) -> f64 {
        self.value
    }
    fn grad_own(&self, _y: &Vector, _x: &Vector) -> Vector {
        Vector::zeros(self.own_dim)
    }
    fn hess_x(&self, _y: &Vector, _x: &Vector) -> Triplets {
        Triplets::new(self.own_dim, self.n)
    }
    fn hess_y(&self, _y: &Vector, _x: &Vector) -> Triplets {
        Triplets::new(self.own_dim, self.n_leader)
    }
}

impl LeaderObjective for ConstantObjective {
    fn value(&self, _y: &Vector, _x: &Vector) -> f64 {
        self.value
    }
    fn grad_y(&self, _y: &Vector, _x: &Vector) -> Vector {
        Vector::zeros(self.n_leader)
    }
    fn grad_x(&self, _y: &Vector, _x: &Vector) -> Vector {
        Vector::zeros(self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_quadratic() -> GameSpec {
        // One follower maximizing -(x - 2)², independent of y.
        let p = Matrix::from_element(1, 1, -2.0);
        let q = Vector::from_element(1, 4.0);
        GameSpec::builder(1, vec![1])
            .leader(ConstantObjective { value: 0.0, own_dim: 1, n: 1, n_leader: 1 })
            .follower(QuadraticFollower { block: 0..1, p, q, r: Matrix::zeros(1, 1) })
            .build()
            .unwrap()
    }

    #[test]
    fn unconstrained_optimum_has_zero_residuals() {
        let spec = single_quadratic();
        let y = Vector::zeros(1);
        let x = Vector::from_element(1, 2.0);
        assert_eq!(residual_gne(&spec, &y, &x, &GneSampling::default()).unwrap(), 0.0);
        assert_eq!(residual_ve(&spec, &y, &x).unwrap(), 0.0);
        let off = Vector::from_element(1, 2.5);
        assert!(residual_gne(&spec, &y, &off, &GneSampling::default()).unwrap() > 0.0);
        assert_eq!(residual_ve(&spec, &y, &off).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant_followers_give_zero_field() {
        let spec = GameSpec::builder(1, vec![2, 1])
            .leader(ConstantObjective { value: 1.0, own_dim: 0, n: 3, n_leader: 1 })
            .follower(ConstantObjective { value: 3.0, own_dim: 2, n: 3, n_leader: 1 })
            .follower(ConstantObjective { value: 3.0, own_dim: 1, n: 3, n_leader: 1 })
            .build()
            .unwrap();
        let f = assemble_gradient_field(&spec).unwrap();
        let d = f.evaluate(&Vector::zeros(1), &Vector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(d, Vector::zeros(3));
    }

    #[test]
    fn dimension_mismatch_names_follower() {
        let r = GameSpec::builder(1, vec![1, 2])
            .leader(ConstantObjective { value: 0.0, own_dim: 0, n: 3, n_leader: 1 })
            .follower(ConstantObjective { value: 0.0, own_dim: 1, n: 3, n_leader: 1 })
            .follower(ConstantObjective { value: 0.0, own_dim: 1, n: 3, n_leader: 1 })
            .build();
        match r {
            Err(Error::Config { follower: Some(1), .. }) => {}
            other => panic!("expected follower 1 config error, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_point_reports_constraint() {
        let spec = GameSpec::builder(1, vec![1])
            .leader(ConstantObjective { value: 0.0, own_dim: 0, n: 1, n_leader: 1 })
            .follower(ConstantObjective { value: 0.0, own_dim: 1, n: 1, n_leader: 1 })
            .constraint(AffineConstraint::le(Owner::Follower(0), vec![(0, 1.0)], 1.0))
            .build()
            .unwrap();
        let r = residual_ve(&spec, &Vector::zeros(1), &Vector::from_element(1, 3.0));
        assert!(matches!(r, Err(Error::Infeasible { constraint: 0, .. })));
    }

    #[test]
    fn block_views() {
        let spec = GameSpec::builder(1, vec![2, 1])
            .leader(ConstantObjective { value: 0.0, own_dim: 0, n: 3, n_leader: 1 })
            .follower(ConstantObjective { value: 0.0, own_dim: 2, n: 3, n_leader: 1 })
            .follower(ConstantObjective { value: 0.0, own_dim: 1, n: 3, n_leader: 1 })
            .build()
            .unwrap();
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(spec.slice(&x, 0).as_slice(), &[1.0, 2.0]);
        assert_eq!(spec.except(&x, 0).as_slice(), &[3.0]);
        assert_eq!(spec.except(&x, 1).as_slice(), &[1.0, 2.0]);
    }
}
