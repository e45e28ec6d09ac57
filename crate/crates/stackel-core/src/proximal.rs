//! Proximal best-response baseline. The leader and then each follower in
//! ascending order maximize their own objective plus `−(τ^t/2)‖· − ·^(t)‖²`
//! with everyone else held fixed; the hierarchy is ignored.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::game::{FollowerProfile, GameSpec, LeaderPoint};
use crate::linalg::Vector;
use crate::pigd::FollowerSets;
use crate::projection::{ConvexPolytope, DEFAULT_TOL};
use crate::trace::{SolveAbort, SolveTrace, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauSchedule {
    /// `τ^t = τ0 / (1 + t)`.
    Harmonic {
        tau0: f64,
    },
    Constant(f64),
}

impl TauSchedule {
    pub fn tau(&self, t: usize) -> f64 {
        match *self {
            TauSchedule::Harmonic { tau0 } => tau0 / (1.0 + t as f64),
            TauSchedule::Constant(c) => c,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProximalConfig {
    pub tau: TauSchedule,
    /// Stop when `‖(y, x)^(t+1) − (y, x)^(t)‖ < stop_eps`.
    pub stop_eps: f64,
    pub t_max: usize,
    /// Inner solves stop when the projected-gradient step falls below this
    /// (relative to `1 + ‖u‖_∞`).
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub trace_every: usize,
}

impl Default for ProximalConfig {
    fn default() -> Self {
        Self {
            tau: TauSchedule::Harmonic { tau0: 1.0 },
            stop_eps: 1e-6,
            t_max: 5_000,
            inner_tol: 1e-11,
            inner_max_iter: 10_000,
            trace_every: 1,
        }
    }
}

impl ProximalConfig {
    pub fn validate(&self) -> Result<()> {
        let tau_ok = match self.tau {
            TauSchedule::Harmonic { tau0 } => tau0 > 0.0,
            TauSchedule::Constant(c) => c > 0.0,
        };
        if !tau_ok || !(self.stop_eps > 0.0 && self.inner_tol > 0.0) || self.t_max == 0 || self.trace_every == 0 {
            return Err(Error::config("proximal schedule, tolerances, t_max and trace_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ProximalResult {
    pub y: LeaderPoint,
    pub x: FollowerProfile,
    pub trace: SolveTrace,
}

/// Maximizes `f(u) − (τ/2)‖u − c‖²` over `set` by projected gradient ascent.
/// A step `s` is accepted when the local Lipschitz estimate of the gradient
/// along the step is at most `1/s`; this uses gradient differences only, so
/// it stays reliable when function differences drop below rounding. `step`
/// carries the last accepted step size between calls.
fn prox_ascent(
    set: &ConvexPolytope,
    center: &Vector,
    tau: f64,
    step: &mut f64,
    cfg: &ProximalConfig,
    grad: impl Fn(&Vector) -> Vector,
    t: usize,
) -> Result<Vector> {
    let grad_phi = |u: &Vector| grad(u) - (u - center) * tau;
    let mut u = set.project(center, DEFAULT_TOL)?;
    let mut g = grad_phi(&u);
    let cap = 1.0 / tau;
    let mut s = step.min(cap);
    for _ in 0..cfg.inner_max_iter {
        loop {
            let un = set.project(&(&u + &g * s), DEFAULT_TOL)?;
            let d = &un - &u;
            let dn = d.norm();
            let gn = grad_phi(&un);
            if dn == 0.0 || (&gn - &g).norm() * s <= dn * (1.0 + 1e-12) {
                u = un;
                g = gn;
                *step = s;
                if dn <= cfg.inner_tol * (1.0 + crate::linalg::norm_inf(&u)) {
                    return Ok(u);
                }
                s = (2.0 * s).min(cap);
                break;
            }
            s *= 0.5;
            if s < 1e-300 {
                return Err(Error::InnerNotConverged { iteration: t });
            }
        }
    }
    Err(Error::InnerNotConverged { iteration: t })
}

pub fn solve_proximal(
    spec: &GameSpec,
    y0: &LeaderPoint,
    x0: &FollowerProfile,
    cfg: &ProximalConfig,
) -> std::result::Result<ProximalResult, SolveAbort> {
    let mut trace = SolveTrace::new("proximal");
    let abort = |error: Error, trace: SolveTrace| SolveAbort { error, trace };
    if let Err(e) = cfg.validate() {
        return Err(abort(e, trace));
    }
    let lset = spec.leader_set();
    if !lset.contains(y0, 1e-8) {
        return Err(abort(Error::config("initial leader point is outside the leader set"), trace));
    }
    if let Err(e) = spec.check_feasible(y0, x0) {
        return Err(abort(e, trace));
    }
    let sets = match FollowerSets::new(spec, y0) {
        Ok(s) => s,
        Err(e) => return Err(abort(e, trace)),
    };
    let start = Instant::now();
    let (mut y, mut x) = (y0.clone(), x0.clone());
    let mut leader_step = f64::INFINITY;
    let mut follower_step = vec![f64::INFINITY; spec.n_followers()];
    for t in 0..cfg.t_max {
        let tau = cfg.tau.tau(t);
        let leader = spec.leader();
        let y_next = match prox_ascent(lset, &y, tau, &mut leader_step, cfg, |u| leader.grad_y(u, &x), t) {
            Ok(v) => v,
            Err(e) => return Err(abort(e, trace)),
        };
        let mut x_next = x.clone();
        for i in 0..spec.n_followers() {
            let slice = match spec.follower_slice(&y_next, &x_next, i) {
                Ok(s) => s,
                Err(e) => return Err(abort(e, trace)),
            };
            let fi = spec.follower(i);
            let base = x_next.clone();
            let xi = spec.slice(&x, i);
            let r = prox_ascent(
                &slice,
                &xi,
                tau,
                &mut follower_step[i],
                cfg,
                |u| fi.grad_own(&y_next, &spec.with_block(&base, i, u)),
                t,
            );
            match r {
                Ok(u) => x_next.rows_range_mut(spec.block(i)).copy_from(&u),
                Err(e) => return Err(abort(e, trace)),
            }
        }
        let step_norm = ((&y_next - &y).norm_squared() + (&x_next - &x).norm_squared()).sqrt();
        let done = step_norm < cfg.stop_eps;
        if t % cfg.trace_every == 0 || t + 1 == cfg.t_max || done {
            let residual = match sets.at(spec, &y).and_then(|s| crate::game::ve_residual_on(spec, &s, &y, &x)) {
                Ok(r) => r,
                Err(e) => return Err(abort(e, trace)),
            };
            trace.push(TraceRecord {
                t,
                y: y.iter().cloned().collect(),
                leader_objective: spec.native_sign() * spec.leader().value(&y, &x),
                follower_objectives: spec.follower_values(&y, &x),
                ve_residual: residual,
                step_norm,
                active_set: None,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        trace.iterations = t + 1;
        if done {
            trace.converged = true;
            return Ok(ProximalResult { y, x, trace });
        }
        y = y_next;
        x = x_next;
    }
    Ok(ProximalResult { y, x, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{AffineConstraint, ConstantObjective, Owner};
    use crate::problems::{build_charging_game, ChargingInstance};

    #[test]
    fn constant_objectives_are_a_fixed_point() {
        let spec = GameSpec::builder(1, vec![2])
            .leader(ConstantObjective { value: 1.0, own_dim: 0, n: 2, n_leader: 1 })
            .follower(ConstantObjective { value: 1.0, own_dim: 2, n: 2, n_leader: 1 })
            .constraint(AffineConstraint::le(Owner::Follower(0), vec![(0, 1.0), (1, 1.0)], 1.0))
            .leader_set(ConvexPolytope::boxed(vec![0.0], vec![1.0]).unwrap())
            .build()
            .unwrap();
        let y0 = Vector::from_element(1, 0.3);
        let x0 = Vector::from_vec(vec![0.2, 0.4]);
        let r = solve_proximal(&spec, &y0, &x0, &ProximalConfig::default()).unwrap();
        assert_eq!(r.trace.iterations, 1);
        assert!(r.trace.converged);
        assert_eq!((r.y, r.x), (y0, x0));
    }

    #[test]
    fn charging_price_runs_to_the_top_of_the_box() {
        let inst = ChargingInstance::default_instance();
        let spec = build_charging_game(&inst).unwrap();
        let y0 = inst.initial_point();
        let x0 = Vector::zeros(2);
        let r = solve_proximal(&spec, &y0, &x0, &ProximalConfig::default()).unwrap();
        assert!((r.y[0] - 5.0).abs() > 0.1);
        assert!((r.y[0] - 10.0).abs() < 1e-6, "{}", r.y[0]);
    }

    #[test]
    fn large_constant_tau_contracts() {
        let inst = ChargingInstance::new(vec![6.0, 4.0], vec![1.0, 2.0], 100.0);
        let spec = build_charging_game(&inst).unwrap();
        let cfg = ProximalConfig { tau: TauSchedule::Constant(50.0), t_max: 30, ..Default::default() };
        let r = solve_proximal(&spec, &Vector::from_element(1, 1.0), &Vector::zeros(2), &cfg).unwrap();
        let steps: Vec<f64> = r.trace.records.iter().map(|r| r.step_norm).collect();
        for w in steps.windows(2).skip(1) {
            assert!(w[1] < w[0], "{steps:?}");
        }
    }
}
