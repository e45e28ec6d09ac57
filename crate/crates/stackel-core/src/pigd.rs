//! Projected implicit gradient ascent on the leader's reduced objective
//! `y ↦ f_L(y, x*(y))`.
//!
//! Each outer step solves the followers' variational equilibrium at the
//! current `y` (warm-started from the previous one), lifts it to a KKT point
//! `w = (x, z, λ, μ)`, differentiates the active KKT system for `dx/dy`, and
//! takes a projected step along `∂_y f_L + (dx/dy)ᵀ ∂_x f_L`. The derivative
//! comes from the lifted system or, by default, from the equivalent and much
//! smaller VI system (see [`GradientRoute`]).

use std::time::Instant;

use crate::error::{Error, Result};
use crate::game::{ve_residual_on, GameSpec, LeaderPoint};
use crate::implicit::{build_active_system, implicit_gradient, leader_total_gradient, reduced_gradient};
use crate::kkt::{detect_active_set, recover_multipliers, LiftedPoint, EPS_ACT};
use crate::linalg::Vector;
use crate::projection::{ConvexPolytope, DEFAULT_TOL};
use crate::trace::{SolveAbort, SolveTrace, TraceRecord};
use crate::ve::{solve_ve_on, VEConfig, VEResult};

/// How `dx/dy` is obtained at each outer step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradientRoute {
    /// Solve the follower VI's active KKT system directly.
    #[default]
    Reduced,
    /// Differentiate the full lifted system in `w = (x, z, λ, μ)`.
    Lifted,
}

#[derive(Clone, Debug)]
pub struct PIGDConfig {
    /// `ρ_L`.
    pub leader_step: f64,
    /// Stop when `‖y^(t+1) − y^(t)‖ < stop_eps`.
    pub stop_eps: f64,
    pub t_max: usize,
    pub ve_config: VEConfig,
    pub trace_every: usize,
    /// Halve `ρ_L` after this many consecutive steps that lower the leader
    /// objective; `0` disables backtracking.
    pub backtrack_after: usize,
    /// Check the VI certificate of every lower-level solution, not only at
    /// recorded iterations.
    pub certify_every_iteration: bool,
    pub route: GradientRoute,
}

impl Default for PIGDConfig {
    fn default() -> Self {
        Self {
            leader_step: 1e-2,
            stop_eps: 1e-6,
            t_max: 5_000,
            ve_config: VEConfig::default(),
            trace_every: 1,
            backtrack_after: 10,
            certify_every_iteration: true,
            route: GradientRoute::default(),
        }
    }
}

impl PIGDConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.leader_step > 0.0 && self.stop_eps > 0.0) || self.t_max == 0 || self.trace_every == 0 {
            return Err(Error::config("PIGD step, tolerance, t_max and trace_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PIGDResult {
    pub y: LeaderPoint,
    /// Lifted lower-level solution at `y`.
    pub w: LiftedPoint,
    pub trace: SolveTrace,
    /// Leader step size in effect at the end.
    pub leader_step: f64,
}

/// Joint follower set, shared across outer iterations when no constraint
/// depends on `y`.
pub(crate) struct FollowerSets {
    fixed: Option<ConvexPolytope>,
}

impl FollowerSets {
    pub(crate) fn new(spec: &GameSpec, y: &Vector) -> Result<Self> {
        let depends_on_y = spec.constraints().iter().any(|c| !c.y_coef.is_empty());
        Ok(Self { fixed: if depends_on_y { None } else { Some(spec.follower_polytope(y)?) } })
    }

    pub(crate) fn at(&self, spec: &GameSpec, y: &Vector) -> Result<std::borrow::Cow<'_, ConvexPolytope>> {
        Ok(match &self.fixed {
            Some(s) => std::borrow::Cow::Borrowed(s),
            None => std::borrow::Cow::Owned(spec.follower_polytope(y)?),
        })
    }
}

struct Step {
    w: LiftedPoint,
    grad: Vector,
    fingerprint: u64,
    ve: VEResult,
}

fn lower_level(
    spec: &GameSpec,
    set: &ConvexPolytope,
    y: &Vector,
    warm: Option<&VEResult>,
    cfg: &PIGDConfig,
    certify: bool,
    t: usize,
) -> Result<(Step, Option<f64>)> {
    let mut vc = cfg.ve_config.clone();
    if let Some(prev) = warm {
        vc.warm_start = Some(prev.x_star.clone()).filter(|w| spec.check_feasible(y, w).is_ok());
        // Reuse the previous step size instead of re-estimating `L̂`.
        vc.step = vc.step.or(Some(prev.step));
    }
    let ve = solve_ve_on(spec, set, y, &vc)?;
    if !ve.converged {
        return Err(Error::InnerNotConverged { iteration: t });
    }
    let x = ve.x_star.clone();
    let residual = if certify {
        let r = ve_residual_on(spec, set, y, &x)?;
        if r > 1e-6 {
            return Err(Error::NotEquilibrium { residual: r });
        }
        Some(r)
    } else {
        None
    };
    // At a converged lower level the lifted copy z coincides with x.
    let w = recover_multipliers(spec, y, &x, &x)?;
    let act = detect_active_set(spec, y, &w, EPS_ACT);
    let dxdy = match cfg.route {
        GradientRoute::Reduced => reduced_gradient(spec, y, &w, &act),
        GradientRoute::Lifted => implicit_gradient(&build_active_system(spec, y, &w, &act)?),
    };
    let grad = leader_total_gradient(spec, y, &w, &dxdy);
    Ok((Step { w, grad, fingerprint: act.fingerprint(), ve }, residual))
}

/// Runs the outer loop from `proj_{Ω_L}(y0)`.
///
/// On convergence the returned `y` is the last evaluated iterate, whose next
/// step was shorter than `stop_eps`, and `w` is its lower-level solution.
pub fn solve_pigd(spec: &GameSpec, y0: &LeaderPoint, cfg: &PIGDConfig) -> std::result::Result<PIGDResult, SolveAbort> {
    let mut trace = SolveTrace::new("pigd");
    let abort = |error: Error, trace: SolveTrace| SolveAbort { error, trace };
    if let Err(e) = cfg.validate() {
        return Err(abort(e, trace));
    }
    let start = Instant::now();
    let lset = spec.leader_set();
    let mut y = match lset.project(y0, DEFAULT_TOL) {
        Ok(y) => y,
        Err(e) => return Err(abort(e, trace)),
    };
    let sets = match FollowerSets::new(spec, &y) {
        Ok(s) => s,
        Err(e) => return Err(abort(e, trace)),
    };
    let mut rho = cfg.leader_step;
    let mut warm: Option<VEResult> = None;
    let mut prev_obj = f64::NEG_INFINITY;
    let mut worse = 0usize;
    let mut last: Option<(Vector, LiftedPoint)> = None;
    for t in 0..cfg.t_max {
        let record = t % cfg.trace_every == 0 || t + 1 == cfg.t_max;
        let set = match sets.at(spec, &y) {
            Ok(s) => s,
            Err(e) => return Err(abort(e, trace)),
        };
        let (step, mut residual) =
            match lower_level(spec, &set, &y, warm.as_ref(), cfg, cfg.certify_every_iteration || record, t) {
                Ok(s) => s,
                Err(e) => return Err(abort(e, trace)),
            };
        let y_next = match lset.project(&(&y + &step.grad * rho), DEFAULT_TOL) {
            Ok(v) => v,
            Err(e) => return Err(abort(e, trace)),
        };
        let step_norm = (&y_next - &y).norm();
        let obj = spec.leader().value(&y, &step.w.x);
        let done = step_norm < cfg.stop_eps;
        if (record || done) && residual.is_none() {
            residual = match ve_residual_on(spec, &set, &y, &step.w.x) {
                Ok(r) => Some(r),
                Err(e) => return Err(abort(e, trace)),
            };
        }
        if record || done {
            trace.push(TraceRecord {
                t,
                y: y.iter().cloned().collect(),
                leader_objective: spec.native_sign() * obj,
                follower_objectives: spec.follower_values(&y, &step.w.x),
                ve_residual: residual.unwrap_or(f64::NAN),
                step_norm,
                active_set: Some(step.fingerprint),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        trace.iterations = t + 1;
        if done {
            trace.converged = true;
            return Ok(PIGDResult { y, w: step.w, trace, leader_step: rho });
        }
        if cfg.backtrack_after > 0 {
            if obj < prev_obj {
                worse += 1;
                if worse >= cfg.backtrack_after {
                    rho *= 0.5;
                    worse = 0;
                }
            } else {
                worse = 0;
            }
        }
        prev_obj = obj;
        warm = Some(step.ve);
        last = Some((y, step.w));
        y = y_next;
    }
    let (y, w) = last.expect("t_max >= 1");
    Ok(PIGDResult { y, w, trace, leader_step: rho })
}

/// Solves the lower level along `y_path`, warm-starting each solve from the
/// previous solution.
pub fn warm_start_chain(spec: &GameSpec, y_path: &[LeaderPoint], cfg: &VEConfig) -> Result<Vec<VEResult>> {
    let Some(first) = y_path.first() else { return Ok(Vec::new()) };
    let sets = FollowerSets::new(spec, first)?;
    let mut out: Vec<VEResult> = Vec::with_capacity(y_path.len());
    for y in y_path {
        let mut c = cfg.clone();
        c.warm_start = out.last().map(|r| r.x_star.clone()).filter(|x| spec.check_feasible(y, x).is_ok());
        let set = sets.at(spec, y)?;
        out.push(solve_ve_on(spec, &set, y, &c)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{AffineConstraint, ConstantObjective, Owner, QuadraticFollower};
    use crate::linalg::Matrix;
    use crate::problems::{build_charging_game, ChargingInstance};

    #[test]
    fn default_charging_instance_converges_to_closed_form() {
        let inst = ChargingInstance::default_instance();
        let spec = build_charging_game(&inst).unwrap();
        let r = solve_pigd(&spec, &inst.initial_point(), &PIGDConfig::default()).unwrap();
        assert!(r.trace.converged);
        assert!((r.y[0] - 5.0).abs() < 1e-3, "{}", r.y[0]);
        assert!((r.w.x.clone() - Vector::from_vec(vec![5.0, 5.0])).amax() < 1e-3);
        assert!(r.trace.last().unwrap().ve_residual <= 1e-5);
    }

    #[test]
    fn routes_give_the_same_iterates() {
        let inst = ChargingInstance::new(vec![9.0, 7.0, 4.0], vec![1.0, 0.5, 2.0], 8.0);
        let spec = build_charging_game(&inst).unwrap();
        let run = |route| {
            let cfg = PIGDConfig { route, t_max: 40, ..Default::default() };
            solve_pigd(&spec, &inst.initial_point(), &cfg).unwrap().trace
        };
        let (a, b) = (run(GradientRoute::Reduced), run(GradientRoute::Lifted));
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!((ra.y[0] - rb.y[0]).abs() < 1e-10, "{} {}", ra.y[0], rb.y[0]);
        }
    }

    #[test]
    fn constant_leader_objective_stops_after_one_step() {
        let spec = crate::game::GameSpec::builder(1, vec![1])
            .leader(ConstantObjective { value: 2.0, own_dim: 0, n: 1, n_leader: 1 })
            .follower(QuadraticFollower {
                block: 0..1,
                p: Matrix::from_element(1, 1, -1.0),
                q: Vector::zeros(1),
                r: Matrix::from_element(1, 1, 1.0),
            })
            .constraint(AffineConstraint::le(Owner::Follower(0), vec![(0, 1.0)], 4.0))
            .leader_set(ConvexPolytope::boxed(vec![-1.0], vec![1.0]).unwrap())
            .build()
            .unwrap();
        let r = solve_pigd(&spec, &Vector::from_element(1, 3.0), &PIGDConfig::default()).unwrap();
        assert_eq!(r.trace.iterations, 1);
        assert!(r.trace.converged);
        assert_eq!(r.y[0], 1.0);
    }

    #[test]
    fn warm_chain_tracks_closed_form() {
        let inst = ChargingInstance::new(vec![10.0, 8.0], vec![1.0, 2.0], 50.0);
        let spec = build_charging_game(&inst).unwrap();
        let path: Vec<Vector> = [4.0, 4.1, 4.2].iter().map(|&p| Vector::from_element(1, p)).collect();
        let res = warm_start_chain(&spec, &path, &VEConfig::default()).unwrap();
        for (r, y) in res.iter().zip(&path) {
            for i in 0..2 {
                assert!((r.x_star[i] - (inst.b[i] - y[0]) / inst.s[i]).abs() < 1e-8);
            }
        }
    }
}
