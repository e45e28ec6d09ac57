//! EV dispatching: an operator prices `M` stations, each of `N` EVs picks a
//! station distribution `x_i` on the simplex, and the operator steers the
//! expected station loads `v^m = Σ_i x_i^m` toward targets `V^m`.
//!
//! Profile layout: `x[i * M + m] = x_i^m`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{AffineConstraint, BatchField, FollowerObjective, GameSpec, LeaderObjective, Owner};
use crate::linalg::{Triplets, Vector};
use crate::projection::ConvexPolytope;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchInstance {
    pub n: usize,
    pub m: usize,
    pub ev_positions: Vec<[f64; 2]>,
    pub station_positions: Vec<[f64; 2]>,
    /// Required load `E_i`.
    pub load: Vec<f64>,
    pub alpha_d: Vec<f64>,
    pub alpha_p: Vec<f64>,
    pub alpha_v: Vec<f64>,
    /// Target EV counts `V^m`.
    pub target: Vec<f64>,
    /// Energy limits `L^m`.
    pub energy_limit: Vec<f64>,
    /// Capacity limits `U^m`.
    pub capacity: Vec<f64>,
    pub p_min: f64,
    pub p_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_price: Option<f64>,
}

impl DispatchInstance {
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return Err(Error::config("dispatch instance needs at least one EV and one station"));
        }
        let per_ev = [
            ("ev_positions", self.ev_positions.len()),
            ("load", self.load.len()),
            ("alpha_d", self.alpha_d.len()),
            ("alpha_p", self.alpha_p.len()),
            ("alpha_v", self.alpha_v.len()),
        ];
        for (name, len) in per_ev {
            if len != n {
                return Err(Error::config(format!("{name} has length {len}, expected n = {n}")));
            }
        }
        let per_station = [
            ("station_positions", self.station_positions.len()),
            ("target", self.target.len()),
            ("energy_limit", self.energy_limit.len()),
            ("capacity", self.capacity.len()),
        ];
        for (name, len) in per_station {
            if len != m {
                return Err(Error::config(format!("{name} has length {len}, expected m = {m}")));
            }
        }
        if !(self.p_min < self.p_max) {
            return Err(Error::config("p_min must be below p_max"));
        }
        if let Some(i) = self.load.iter().position(|&e| !(e > 0.0)) {
            return Err(Error::follower(i, "required load must be positive"));
        }
        Ok(())
    }

    pub fn default_instance() -> Self {
        generate_dispatch_instances(0, 25, 5, 1).remove(0)
    }

    /// Euclidean EV-to-station distances, `d[i][m]`.
    pub fn distances(&self) -> Vec<Vec<f64>> {
        self.ev_positions
            .iter()
            .map(|e| {
                self.station_positions.iter().map(|s| ((e[0] - s[0]).powi(2) + (e[1] - s[1]).powi(2)).sqrt()).collect()
            })
            .collect()
    }

    /// Identical starting price at every station; mid-box by default.
    pub fn initial_point(&self) -> Vector {
        let p = self.initial_price.unwrap_or(0.5 * (self.p_min + self.p_max)).clamp(self.p_min, self.p_max);
        Vector::from_element(self.m, p)
    }

    /// Each EV spread evenly over the stations.
    pub fn uniform_profile(&self) -> Vector {
        Vector::from_element(self.n * self.m, 1.0 / self.m as f64)
    }

    /// Expected station loads `v^m`.
    pub fn station_counts(&self, x: &Vector) -> Vec<f64> {
        station_counts(x, self.n, self.m)
    }
}

fn station_counts(x: &Vector, n: usize, m: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    for i in 0..n {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk += x[i * m + k];
        }
    }
    v
}

/// Sampling ranges for [`generate_dispatch_instances_with`].
#[derive(Clone, Debug)]
pub struct DispatchGenerator {
    pub load_range: (f64, f64),
    pub alpha_range: (f64, f64),
    pub p_min: f64,
    pub p_max: f64,
    /// `L^m` and `U^m` are this multiple of the uniform per-station share.
    pub limit_slack: f64,
}

impl Default for DispatchGenerator {
    fn default() -> Self {
        Self { load_range: (0.2, 1.0), alpha_range: (0.2, 0.4), p_min: 1.0, p_max: 20.0, limit_slack: 1.5 }
    }
}

pub fn generate_dispatch_instances(seed: u64, n: usize, m: usize, count: usize) -> Vec<DispatchInstance> {
    generate_dispatch_instances_with(&DispatchGenerator::default(), seed, n, m, count)
}

/// Deterministic in `seed`: instance `k` uses the `k`-th block of draws of a
/// single ChaCha stream.
pub fn generate_dispatch_instances_with(
    g: &DispatchGenerator,
    seed: u64,
    n: usize,
    m: usize,
    count: usize,
) -> Vec<DispatchInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let point = |rng: &mut ChaCha8Rng| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let ev_positions: Vec<[f64; 2]> = (0..n).map(|_| point(&mut rng)).collect();
        let station_positions: Vec<[f64; 2]> = (0..m).map(|_| point(&mut rng)).collect();
        let (e0, e1) = g.load_range;
        let (a0, a1) = g.alpha_range;
        let load: Vec<f64> = (0..n).map(|_| rng.random_range(e0..=e1)).collect();
        let alpha_d: Vec<f64> = (0..n).map(|_| rng.random_range(a0..=a1)).collect();
        let alpha_p: Vec<f64> = (0..n).map(|_| rng.random_range(a0..=a1)).collect();
        let alpha_v: Vec<f64> = (0..n).map(|_| rng.random_range(a0..=a1)).collect();
        // Even split of N with the remainder going to the lowest indices.
        let target: Vec<f64> = (0..m).map(|k| (n / m + usize::from(k < n % m)) as f64).collect();
        let total_load: f64 = load.iter().sum();
        let energy_limit = vec![g.limit_slack * total_load / m as f64; m];
        let capacity = vec![g.limit_slack * n as f64 / m as f64; m];
        out.push(DispatchInstance {
            n,
            m,
            ev_positions,
            station_positions,
            load,
            alpha_d,
            alpha_p,
            alpha_v,
            target,
            energy_limit,
            capacity,
            p_min: g.p_min,
            p_max: g.p_max,
            initial_price: None,
        });
    }
    out
}

struct Data {
    n: usize,
    m: usize,
    dist: Vec<Vec<f64>>,
    load: Vec<f64>,
    alpha_d: Vec<f64>,
    alpha_p: Vec<f64>,
    alpha_v: Vec<f64>,
    target: Vec<f64>,
}

impl Data {
    /// Cost slope `A_i^m + α_i^v (x_i^m + v^m)`; the field is its negation.
    fn slope(&self, y: &Vector, x: &Vector, v: &[f64], i: usize, k: usize) -> f64 {
        let m = self.m;
        self.alpha_d[i] * self.dist[i][k]
            + self.alpha_p[i] * self.load[i] * y[k]
            + self.alpha_v[i] * (x[i * m + k] + v[k])
    }

    fn cost(&self, y: &Vector, x: &Vector, v: &[f64], i: usize) -> f64 {
        let m = self.m;
        (0..m)
            .map(|k| {
                let xk = x[i * m + k];
                (self.alpha_d[i] * self.dist[i][k] + self.alpha_p[i] * self.load[i] * y[k] + self.alpha_v[i] * v[k])
                    * xk
            })
            .sum()
    }
}

struct Operator(Arc<Data>);

impl LeaderObjective for Operator {
    fn value(&self, _y: &Vector, x: &Vector) -> f64 {
        let v = station_counts(x, self.0.n, self.0.m);
        -v.iter().zip(&self.0.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    fn grad_y(&self, y: &Vector, _x: &Vector) -> Vector {
        Vector::zeros(y.len())
    }

    fn grad_x(&self, _y: &Vector, x: &Vector) -> Vector {
        let (n, m) = (self.0.n, self.0.m);
        let v = station_counts(x, n, m);
        Vector::from_fn(n * m, |r, _| -2.0 * (v[r % m] - self.0.target[r % m]))
    }
}

struct Ev {
    i: usize,
    data: Arc<Data>,
}

impl FollowerObjective for Ev {
    fn value(&self, y: &Vector, x: &Vector) -> f64 {
        let v = station_counts(x, self.data.n, self.data.m);
        -self.data.cost(y, x, &v, self.i)
    }

    fn grad_own(&self, y: &Vector, x: &Vector) -> Vector {
        let v = station_counts(x, self.data.n, self.data.m);
        Vector::from_fn(self.data.m, |k, _| -self.data.slope(y, x, &v, self.i, k))
    }

    fn hess_x(&self, _y: &Vector, _x: &Vector) -> Triplets {
        let (n, m) = (self.data.n, self.data.m);
        let a = self.data.alpha_v[self.i];
        let mut t = Triplets::new(m, n * m);
        for k in 0..m {
            for j in 0..n {
                t.push(k, j * m + k, if j == self.i { -2.0 * a } else { -a });
            }
        }
        t
    }

    fn hess_y(&self, _y: &Vector, _x: &Vector) -> Triplets {
        let m = self.data.m;
        let mut t = Triplets::new(m, m);
        for k in 0..m {
            t.push(k, k, -self.data.alpha_p[self.i] * self.data.load[self.i]);
        }
        t
    }
}

/// Whole-profile field; avoids recomputing `v` once per follower.
struct Field(Arc<Data>);

impl BatchField for Field {
    fn field(&self, y: &Vector, x: &Vector) -> Vector {
        let (n, m) = (self.0.n, self.0.m);
        let v = station_counts(x, n, m);
        Vector::from_fn(n * m, |r, _| -self.0.slope(y, x, &v, r / m, r % m))
    }

    fn jac_x(&self, _y: &Vector, _x: &Vector) -> Triplets {
        let (n, m) = (self.0.n, self.0.m);
        let mut t = Triplets::new(n * m, n * m);
        for i in 0..n {
            let a = self.0.alpha_v[i];
            for k in 0..m {
                for j in 0..n {
                    t.push(i * m + k, j * m + k, if j == i { -2.0 * a } else { -a });
                }
            }
        }
        t
    }

    fn jac_y(&self, _y: &Vector, _x: &Vector) -> Triplets {
        let (n, m) = (self.0.n, self.0.m);
        let mut t = Triplets::new(n * m, m);
        for i in 0..n {
            for k in 0..m {
                t.push(i * m + k, k, -self.0.alpha_p[i] * self.0.load[i]);
            }
        }
        t
    }
}

/// Leader maximizes `−Σ (v^m − V^m)²` (registered with native sign `−1`);
/// followers maximize their negated costs. The upper bounds `x_i^m ≤ 1` are
/// implied by the simplex and are not added.
pub fn build_dispatch_game(inst: &DispatchInstance) -> Result<GameSpec> {
    inst.validate()?;
    let (n, m) = (inst.n, inst.m);
    let data = Arc::new(Data {
        n,
        m,
        dist: inst.distances(),
        load: inst.load.clone(),
        alpha_d: inst.alpha_d.clone(),
        alpha_p: inst.alpha_p.clone(),
        alpha_v: inst.alpha_v.clone(),
        target: inst.target.clone(),
    });
    let mut b = GameSpec::builder(m, vec![m; n])
        .leader(Operator(data.clone()))
        .leader_set(ConvexPolytope::boxed(vec![inst.p_min; m], vec![inst.p_max; m])?)
        .batch(Field(data.clone()))
        .native_sign(-1.0);
    for i in 0..n {
        b = b.follower(Ev { i, data: data.clone() });
        for k in 0..m {
            b = b.constraint(AffineConstraint::le(Owner::Follower(i), vec![(i * m + k, -1.0)], 0.0));
        }
        b = b.constraint(AffineConstraint::eq(Owner::Follower(i), (0..m).map(|k| (i * m + k, 1.0)).collect(), 1.0));
    }
    for k in 0..m {
        let energy = (0..n).map(|j| (j * m + k, inst.load[j])).collect();
        b = b.constraint(AffineConstraint::le(Owner::Shared, energy, inst.energy_limit[k]));
    }
    for k in 0..m {
        let count = (0..n).map(|j| (j * m + k, 1.0)).collect();
        b = b.constraint(AffineConstraint::le(Owner::Shared, count, inst.capacity[k]));
    }
    let spec = b.build()?;
    spec.follower_polytope(&inst.initial_point()).map_err(|e| match e {
        Error::EmptySet => Error::config("station limits admit no feasible assignment"),
        other => other,
    })?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(alpha_v: f64) -> DispatchInstance {
        DispatchInstance {
            n: 2,
            m: 2,
            ev_positions: vec![[0.0, 0.5], [1.0, 0.5]],
            station_positions: vec![[0.5, 0.0], [0.5, 1.0]],
            load: vec![0.5, 0.5],
            alpha_d: vec![0.3, 0.3],
            alpha_p: vec![0.3, 0.3],
            alpha_v: vec![alpha_v, alpha_v],
            target: vec![1.0, 1.0],
            energy_limit: vec![10.0, 10.0],
            capacity: vec![10.0, 10.0],
            p_min: 1.0,
            p_max: 20.0,
            initial_price: None,
        }
    }

    #[test]
    fn generator_is_deterministic_and_in_range() {
        let a = generate_dispatch_instances(0, 25, 5, 2);
        assert_eq!(a, generate_dispatch_instances(0, 25, 5, 2));
        assert_ne!(a[0], a[1]);
        for inst in &a {
            assert!(inst.load.iter().all(|&e| (0.2..=1.0).contains(&e)));
            for al in [&inst.alpha_d, &inst.alpha_p, &inst.alpha_v] {
                assert!(al.iter().all(|&x| (0.2..=0.4).contains(&x)));
            }
            assert_eq!(inst.target.iter().sum::<f64>(), 25.0);
            build_dispatch_game(inst).unwrap();
        }
    }

    #[test]
    fn field_matches_follower_gradients_and_jacobians() {
        let inst = &generate_dispatch_instances(3, 4, 3, 1)[0];
        let spec = build_dispatch_game(inst).unwrap();
        let y = Vector::from_vec(vec![2.0, 5.0, 9.0]);
        let x = Vector::from_fn(12, |r, _| 0.1 + 0.05 * r as f64);
        let mut stacked = Vector::zeros(12);
        let mut jx = Triplets::new(12, 12);
        let mut jy = Triplets::new(12, 3);
        for i in 0..4 {
            stacked.rows_mut(3 * i, 3).copy_from(&spec.follower(i).grad_own(&y, &x));
            jx.push_block(3 * i, 0, &spec.follower(i).hess_x(&y, &x), 1.0);
            jy.push_block(3 * i, 0, &spec.follower(i).hess_y(&y, &x), 1.0);
        }
        assert!((spec.field(&y, &x) - stacked).amax() < 1e-14);
        assert!(spec.field_jac_x(&y, &x).max_abs_diff(&jx) < 1e-14);
        assert!(spec.field_jac_y(&y, &x).max_abs_diff(&jy) < 1e-14);
        // Finite-difference check of the field against the follower values.
        let h = 1e-6;
        for r in 0..12 {
            let i = r / 3;
            let mut xp = x.clone();
            xp[r] += h;
            let mut xm = x.clone();
            xm[r] -= h;
            let fd = (spec.follower(i).value(&y, &xp) - spec.follower(i).value(&y, &xm)) / (2.0 * h);
            assert!((fd - spec.field(&y, &x)[r]).abs() < 1e-8);
        }
    }

    #[test]
    fn single_station_leader_objective_is_constant() {
        let inst = &generate_dispatch_instances(1, 6, 1, 1)[0];
        let spec = build_dispatch_game(inst).unwrap();
        let x = Vector::from_element(6, 1.0);
        let f = spec.leader().value(&Vector::from_element(1, 3.0), &x);
        assert_eq!(f, -(6.0 - inst.target[0]).powi(2));
        assert_eq!(spec.follower_polytope(&Vector::from_element(1, 3.0)).unwrap().vertices(10).unwrap().len(), 1);
    }

    #[test]
    fn infeasible_limits_are_reported() {
        let mut inst = tiny(0.3);
        inst.capacity = vec![0.5, 0.5];
        assert!(matches!(build_dispatch_game(&inst), Err(Error::Config { .. })));
    }

    #[test]
    fn symmetric_case_uniform_profile_has_zero_ve_residual() {
        let inst = tiny(0.3);
        let spec = build_dispatch_game(&inst).unwrap();
        let y = Vector::from_element(2, 5.0);
        let r = crate::game::residual_ve(&spec, &y, &inst.uniform_profile()).unwrap();
        assert!(r < 1e-12, "{r}");
    }
}
