//! The two benchmark games, their instance formats and the conditions checker.

mod charging;
mod conditions;
mod dispatch;
mod instance;

pub use charging::{
    analytic_charging_equilibrium, build_charging_game, charging_equilibrium_at, generate_charging_instances,
    ChargingBranch, ChargingInstance,
};
pub use conditions::{check_existence_conditions, ConditionsReport};
pub use dispatch::{
    build_dispatch_game, generate_dispatch_instances, generate_dispatch_instances_with, DispatchGenerator,
    DispatchInstance,
};
pub use instance::{parse_instance, parse_instance_str, serialize_instance, write_instance, Instance, FORMAT_VERSION};

use crate::error::Result;
use crate::game::GameSpec;
use crate::linalg::Vector;

impl Instance {
    pub fn build(&self) -> Result<GameSpec> {
        match self {
            Instance::Charging(c) => build_charging_game(c),
            Instance::Dispatch(d) => build_dispatch_game(d),
        }
    }

    /// Default leader starting point.
    pub fn initial_point(&self) -> Vector {
        match self {
            Instance::Charging(c) => c.initial_point(),
            Instance::Dispatch(d) => d.initial_point(),
        }
    }

    /// Feasible follower profile to start the proximal baseline from: no
    /// purchases for charging, an even split across stations for dispatch.
    pub fn initial_profile(&self) -> Vector {
        match self {
            Instance::Charging(c) => Vector::zeros(c.n()),
            Instance::Dispatch(d) => d.uniform_profile(),
        }
    }
}
