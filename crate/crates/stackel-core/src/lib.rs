//! Generalized Stackelberg games with one leader and many followers: the data
//! model, variational-equilibrium lower level, implicit differentiation of
//! the lifted follower KKT system, the projected implicit gradient outer loop,
//! a proximal best-response baseline, and two EV benchmark problems.

pub mod error;
pub mod game;
pub mod implicit;
pub mod kkt;
pub mod linalg;
pub mod pigd;
pub mod problems;
pub mod projection;
pub mod proximal;
pub mod trace;
pub mod ve;

pub use error::{Error, Result};
