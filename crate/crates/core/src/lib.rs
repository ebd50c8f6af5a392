//! Pseudo-spectral laboratory for the dissipative surface quasi-geostrophic
//! equation `d_t theta + Lambda^alpha theta + u . grad theta = 0` with
//! `u = grad-perp Lambda^{-1} theta` on a periodic square.
//!
//! The crate builds a two-scale oscillatory approximate solution (radial core
//! plus a sheared high-frequency ring), checks its velocity asymptotics and
//! residual scalings, and evolves the exact equation from its initial data.

pub mod ansatz;
pub mod asymptotics_lab;
pub mod error;
pub mod experiments;
pub mod norms;
pub mod numerics;
pub mod profiles;
pub mod solver;
pub mod spectral_core;

pub use error::{Result, SqgError};
