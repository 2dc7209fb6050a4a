//! Discretization and estimate checks for nonlocal porous-medium equations
//! `∂ₜu = 𝓛^μ[φ(u)]` on a periodic grid.

pub mod energy;
pub mod error;
pub mod grid;
pub mod measures;
pub mod nonlinearity;
pub mod operators;
pub mod quadrature;
pub mod reduce;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction};
