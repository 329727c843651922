//! Exact solvability analysis for general-valued constraint satisfaction
//! problems: Sherali-Adams and Lasserre relaxations, polymorphism algebra,
//! gadget reductions and linear-equation languages.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod algebra;
pub mod augment;
pub mod caps;
pub mod equations;
pub mod error;
pub mod lasserre;
pub mod lp;
pub mod model;
pub mod reductions;
pub mod sherali_adams;
pub mod value;

pub use augment::SubsetMode;
pub use caps::Caps;
pub use error::{Error, Result};
pub use model::{feas_of, opt_of, Constraint, Instance, Language, PartialAssignment, WeightedRelation};
pub use value::{ExtValue, Rational};
