//! Finite-horizon distributionally robust MDPs: game-formulation solvers,
//! duality and rectangularity checks, and brute-force static oracles.

pub mod ambiguity;
pub mod cost;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod io;
pub mod lp;
pub mod mdp;
pub mod oracle;
pub mod report;
pub mod risk;
pub mod robust;
pub mod soc;

pub use error::{Error, Result, Violation, DEFAULT_CAP};
