//! One-time EV charging: the operator sets a price `p`, EV `i` buys `x_i` to
//! maximize `b_i x_i − ½ s_i x_i² − p x_i` subject to the shared limit
//! `Σ x_j ≤ C`, and the operator maximizes revenue `p Σ x_i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{AffineConstraint, FollowerObjective, GameSpec, LeaderObjective, Owner};
use crate::linalg::{Triplets, Vector};
use crate::projection::ConvexPolytope;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargingInstance {
    pub b: Vec<f64>,
    pub s: Vec<f64>,
    /// Joint charging limit `C`.
    pub capacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_price: Option<f64>,
}

impl ChargingInstance {
    pub fn new(b: Vec<f64>, s: Vec<f64>, capacity: f64) -> Self {
        Self { b, s, capacity, initial_price: None }
    }

    /// Two identical EVs, `b = (10, 10)`, `s = (1, 1)`, `C = 20`, starting
    /// price 1.
    pub fn default_instance() -> Self {
        Self { initial_price: Some(1.0), ..Self::new(vec![10.0, 10.0], vec![1.0, 1.0], 20.0) }
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// `B = Σ b_i / s_i`.
    pub fn big_b(&self) -> f64 {
        self.b.iter().zip(&self.s).map(|(b, s)| b / s).sum()
    }

    /// `S = Σ 1 / s_i`.
    pub fn big_s(&self) -> f64 {
        self.s.iter().map(|s| 1.0 / s).sum()
    }

    /// The closed-form optimum applies when `B ≤ 2C`.
    pub fn analytic_valid(&self) -> bool {
        self.big_b() <= 2.0 * self.capacity
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.is_empty() {
            return Err(Error::config("charging instance needs at least one EV"));
        }
        if self.s.len() != self.b.len() {
            return Err(Error::config("b and s must have the same length"));
        }
        if let Some(i) = self.s.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::follower(i, "satisfaction parameter must be positive"));
        }
        if let Some(i) = self.b.iter().position(|b| !b.is_finite()) {
            return Err(Error::follower(i, "battery parameter must be finite"));
        }
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(Error::config("capacity must be positive"));
        }
        Ok(())
    }

    /// Upper end of the price box, `max_i b_i` (at least 0).
    pub fn max_price(&self) -> f64 {
        self.b.iter().cloned().fold(0.0, f64::max)
    }

    pub fn initial_point(&self) -> Vector {
        let p = self.initial_price.unwrap_or(0.0).clamp(0.0, self.max_price());
        Vector::from_element(1, p)
    }
}

struct Revenue;

impl LeaderObjective for Revenue {
    fn value(&self, y: &Vector, x: &Vector) -> f64 {
        y[0] * x.sum()
    }

    fn grad_y(&self, _y: &Vector, x: &Vector) -> Vector {
        Vector::from_element(1, x.sum())
    }

    fn grad_x(&self, y: &Vector, x: &Vector) -> Vector {
        Vector::from_element(x.len(), y[0])
    }
}

struct Buyer {
    i: usize,
    n: usize,
    b: f64,
    s: f64,
}

impl FollowerObjective for Buyer {
    fn value(&self, y: &Vector, x: &Vector) -> f64 {
        let xi = x[self.i];
        self.b * xi - 0.5 * self.s * xi * xi - y[0] * xi
    }

    fn grad_own(&self, y: &Vector, x: &Vector) -> Vector {
        Vector::from_element(1, self.b - self.s * x[self.i] - y[0])
    }

    fn hess_x(&self, _y: &Vector, _x: &Vector) -> Triplets {
        let mut t = Triplets::new(1, self.n);
        t.push(0, self.i, -self.s);
        t
    }

    fn hess_y(&self, _y: &Vector, _x: &Vector) -> Triplets {
        let mut t = Triplets::new(1, 1);
        t.push(0, 0, -1.0);
        t
    }
}

/// `count` instances with `n` EVs, `b_i ~ U[2, 10]`, `s_i ~ U[0.5, 2]` and
/// `C = capacity_factor · B/2`; a factor of at least 1 keeps the closed form
/// valid. Deterministic in `seed`.
pub fn generate_charging_instances(seed: u64, n: usize, count: usize, capacity_factor: f64) -> Vec<ChargingInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(2.0..=10.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..=2.0)).collect();
            let mut inst = ChargingInstance::new(b, s, 0.0);
            inst.capacity = capacity_factor * inst.big_b() / 2.0;
            inst
        })
        .collect()
}

/// Game with leader price box `[0, max_i b_i]` and no sign constraint on
/// the purchases.
pub fn build_charging_game(inst: &ChargingInstance) -> Result<GameSpec> {
    inst.validate()?;
    let n = inst.n();
    let mut b = GameSpec::builder(1, vec![1; n])
        .leader(Revenue)
        .leader_set(ConvexPolytope::boxed(vec![0.0], vec![inst.max_price()])?);
    for i in 0..n {
        b = b.follower(Buyer { i, n, b: inst.b[i], s: inst.s[i] });
    }
    b.constraint(AffineConstraint::le(Owner::Shared, (0..n).map(|j| (j, 1.0)).collect(), inst.capacity)).build()
}

/// `(p*, x*)` with `p* = B/(2S)` and `x*_i = (b_i − p*)/s_i`.
pub fn analytic_charging_equilibrium(inst: &ChargingInstance) -> Result<(f64, Vector)> {
    inst.validate()?;
    if !inst.analytic_valid() {
        return Err(Error::Unsupported(format!(
            "closed form needs B <= 2C (B = {}, C = {})",
            inst.big_b(),
            inst.capacity
        )));
    }
    let p = inst.big_b() / (2.0 * inst.big_s());
    let x = Vector::from_iterator(inst.n(), inst.b.iter().zip(&inst.s).map(|(b, s)| (b - p) / s));
    Ok((p, x))
}

/// Which branch of the followers' equilibrium is taken at a given price.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChargingBranch {
    /// `Σ x_i < C`, zero multiplier.
    Interior,
    /// `Σ x_i = C` with a positive multiplier.
    Binding,
}

/// Closed-form follower equilibrium at price `p`: `x_i = (b_i − p − μ)/s_i`
/// with `μ = max(0, (B − C)/S − p)`. Returns the profile, the shared
/// multiplier and the branch.
pub fn charging_equilibrium_at(inst: &ChargingInstance, p: f64) -> (Vector, f64, ChargingBranch) {
    let (bb, ss) = (inst.big_b(), inst.big_s());
    let mu = ((bb - inst.capacity) / ss - p).max(0.0);
    let x = Vector::from_iterator(inst.n(), inst.b.iter().zip(&inst.s).map(|(b, s)| (b - p - mu) / s));
    let branch = if mu > 0.0 { ChargingBranch::Binding } else { ChargingBranch::Interior };
    (x, mu, branch)
}
