//! Melnikov-function toolkit for autonomous Hamiltonian systems: perturbed
//! vector fields, homoclinic orbits, Melnikov integrals with controlled
//! truncation, certified zeros, and a direct splitting check.

pub mod error;
pub mod hamcore;
pub mod melnikov;
pub mod models;
pub mod odeint;
pub mod orbits;
pub mod roots;
pub mod splitting;
pub mod util;
pub mod zerofind;

pub use error::{Error, Result};
