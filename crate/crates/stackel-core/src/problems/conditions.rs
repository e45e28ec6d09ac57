//! Sampling-based evidence for the existence and uniqueness hypotheses:
//! strong monotonicity of `−D`, concavity of each follower in its own block,
//! convexity of the joint feasible set, and compactness of the leader set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::GameSpec;
use crate::linalg::{Matrix, Vector};
use crate::projection::DEFAULT_TOL;

#[derive(Clone, Debug)]
pub struct ConditionsReport {
    pub samples: usize,
    /// Estimated strong-monotonicity constant `m` of `−D(y, ·)`: the smaller
    /// of the least pair ratio `(−D(x) + D(x′))ᵀ(x − x′)/‖x − x′‖²` and the
    /// least eigenvalue of the symmetric part of `−∂D/∂x` over the samples.
    pub monotonicity: f64,
    pub monotone: bool,
    /// Largest eigenvalue of any follower's own-block Hessian over the samples.
    pub max_own_hessian_eig: f64,
    pub concave: bool,
    /// Largest constraint violation at sampled segment midpoints.
    pub segment_violation: f64,
    pub jointly_convex: bool,
    pub leader_set_bounded: bool,
}

impl ConditionsReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.concave && self.jointly_convex && self.leader_set_bounded
    }
}

fn sym_min_eig(m: &Matrix) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

fn sym_max_eig(m: &Matrix) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, lo: &[f64], hi: &[f64], scale: f64) -> Vector {
    Vector::from_fn(dim, |j, _| {
        let (a, b) = (lo[j].max(-scale), hi[j].min(scale));
        if a < b {
            rng.random_range(a..=b)
        } else {
            a.min(b)
        }
    })
}

/// Draws `samples` leader points and pairs of feasible follower profiles
/// (projections of random points onto the joint set) and checks each
/// condition at them. The report is evidence, not a proof.
pub fn check_existence_conditions(spec: &GameSpec, samples: usize, seed: u64) -> ConditionsReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, nl) = (spec.n(), spec.n_leader());
    let (llo, lhi) = spec.leader_set().bounds();
    let leader_set_bounded = (0..nl).all(|j| {
        let mut c = Vector::zeros(nl);
        c[j] = 1.0;
        let below = spec.leader_set().linear_minimize(&c).is_ok();
        c[j] = -1.0;
        below && spec.leader_set().linear_minimize(&c).is_ok()
    });
    let lscale = 1.0 + llo.iter().chain(lhi).filter(|v| v.is_finite()).fold(0.0_f64, |s, v| s.max(v.abs()));
    let xfree_lo = vec![f64::NEG_INFINITY; n];
    let xfree_hi = vec![f64::INFINITY; n];

    let mut mono = f64::INFINITY;
    let mut hess = f64::NEG_INFINITY;
    let mut seg_viol: f64 = 0.0;
    let mut drawn = 0;
    for _ in 0..samples {
        let y0 = random_point(&mut rng, nl, llo, lhi, lscale);
        let Ok(y) = spec.leader_set().project(&y0, DEFAULT_TOL) else {
            continue;
        };
        let Ok(set) = spec.follower_polytope(&y) else {
            continue;
        };
        let (xlo, xhi) = set.bounds();
        let xscale = 1.0 + xlo.iter().chain(xhi).filter(|v| v.is_finite()).fold(0.0_f64, |s, v| s.max(v.abs()));
        let draw = |rng: &mut ChaCha8Rng| {
            let raw = random_point(rng, n, &xfree_lo, &xfree_hi, 2.0 * xscale);
            set.project(&raw, DEFAULT_TOL).ok()
        };
        let (Some(xa), Some(xb)) = (draw(&mut rng), draw(&mut rng)) else {
            continue;
        };
        drawn += 1;
        let dx = &xa - &xb;
        let nn = dx.norm_squared();
        if nn > 1e-16 {
            let gain = -(spec.field(&y, &xa) - spec.field(&y, &xb)).dot(&dx);
            mono = mono.min(gain / nn);
        }
        let jac = spec.field_jac_x(&y, &xa).to_dense();
        mono = mono.min(sym_min_eig(&(-&jac)));
        for i in 0..spec.n_followers() {
            let blk = spec.block(i);
            let h = spec.follower(i).hess_x(&y, &xa).to_dense();
            let own = h.columns(blk.start, blk.len()).into_owned();
            hess = hess.max(sym_max_eig(&own));
        }
        let mid = (&xa + &xb) * 0.5;
        seg_viol = seg_viol.max(spec.max_violation(&y, &mid).1);
    }
    let mono = if drawn == 0 { f64::NAN } else { mono };
    ConditionsReport {
        samples: drawn,
        monotonicity: mono,
        monotone: mono > 1e-9,
        max_own_hessian_eig: hess,
        concave: hess <= 1e-9,
        segment_violation: seg_viol,
        jointly_convex: seg_viol <= 1e-8,
        leader_set_bounded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{AffineConstraint, ConstantObjective, Owner, QuadraticFollower};
    use crate::problems::{build_charging_game, build_dispatch_game, generate_dispatch_instances, ChargingInstance};
    use crate::projection::ConvexPolytope;

    #[test]
    fn charging_monotonicity_is_min_s() {
        let inst = ChargingInstance::new(vec![4.0, 6.0, 8.0], vec![0.7, 1.3, 2.0], 30.0);
        let r = check_existence_conditions(&build_charging_game(&inst).unwrap(), 20, 1);
        assert!(r.passed(), "{r:?}");
        assert!((r.monotonicity - 0.7).abs() < 1e-9, "{}", r.monotonicity);
    }

    #[test]
    fn convex_follower_fails_concavity() {
        let spec = GameSpec::builder(1, vec![1])
            .leader(ConstantObjective { value: 0.0, own_dim: 0, n: 1, n_leader: 1 })
            .follower(QuadraticFollower {
                block: 0..1,
                p: Matrix::from_element(1, 1, 1.0),
                q: Vector::zeros(1),
                r: Matrix::zeros(1, 1),
            })
            .constraint(AffineConstraint::le(Owner::Follower(0), vec![(0, 1.0)], 1.0))
            .constraint(AffineConstraint::le(Owner::Follower(0), vec![(0, -1.0)], 1.0))
            .leader_set(ConvexPolytope::boxed(vec![0.0], vec![1.0]).unwrap())
            .build()
            .unwrap();
        let r = check_existence_conditions(&spec, 10, 0);
        assert!(!r.concave && !r.passed());
    }

    #[test]
    fn dispatch_without_congestion_is_flagged() {
        let mut inst = generate_dispatch_instances(0, 4, 2, 1).remove(0);
        let base = check_existence_conditions(&build_dispatch_game(&inst).unwrap(), 5, 0);
        assert!(base.monotone, "{base:?}");
        inst.alpha_v = vec![0.0; 4];
        let r = check_existence_conditions(&build_dispatch_game(&inst).unwrap(), 5, 0);
        assert!(!r.monotone && r.monotonicity.abs() < 1e-12, "{r:?}");
    }
}
