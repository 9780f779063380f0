//! Weighted covering and packing games with advertising dynamics.
//!
//! The core types are generic over [`Scalar`]; the aliases below fix the
//! scalar to `f64` (the default for experiments) or to exact rationals.

pub mod advertiser;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod harness;
pub mod instances;
pub mod packing;
pub mod scalar;

pub use error::{Error, Result};
pub use game::{Action, CoverTracker, Deviation, InstanceStats, JointState, NashCheck};
pub use scalar::Scalar;

pub type CoveringInstance = game::Instance<f64>;
pub type ExactInstance = game::Instance<num_rational::Rational64>;
