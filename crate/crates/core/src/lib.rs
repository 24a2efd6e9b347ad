//! Forward and inverse solvers for the semilinear fractional magnetic
//! Schrödinger equation with exterior data, in one and two dimensions.

pub mod bell;
pub mod cli;
pub mod config;
pub mod dn_map;
pub mod error;
pub mod forward;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod nonlocal;
pub mod oracle;
pub mod potentials;
pub mod quadrature;

pub use error::{Error, Result};
