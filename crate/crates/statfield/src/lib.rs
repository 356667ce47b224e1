//! Coupled probability-density / phase field theories on a 1-D grid.
//!
//! The state is a density `rho` and a phase `S` evolving under
//! `rho_t = -(rho S'/m)'` and `S_t = L0 - S'^2/2m - V`, where the coupling
//! `L0` selects the member of the family (classical, power law, quantum,
//! polynomial).

pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod maxent;
pub mod momentum;
pub mod observables;
pub mod symbolic;

pub use error::{Error, Result};
