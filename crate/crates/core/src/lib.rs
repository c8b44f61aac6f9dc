//! Numerical laboratory for mean-field chaos of a Bose-Einstein condensate in
//! a tilted optical lattice.
//!
//! The pipeline runs bottom-up: [`units`] fixes the parameter model,
//! [`ws_basis`] builds the Wannier-Stark states and their overlap tensor,
//! [`gpe`] evolves the continuum Gross-Pitaevskii field, [`lattice`] evolves
//! the discrete mode model, and [`analysis`] maps its phase space.

pub mod analysis;
pub mod gpe;
pub mod lattice;
pub mod ode;
pub mod tridiag;
pub mod units;
pub mod ws_basis;
