//! Numerical realization of the semilinear parabolic semiflow
//! `u_t - Δu = F(x, u)` on truncated grids.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: truncated meshes, discrete `L²`/`H¹` norms, the smooth cutoff family.
//! - [`model`]: the switch nonlinearity and the hypothesis checkers.
//! - [`operator`]: symmetric tridiagonal `-Δ_h + V`, exact inertia, shifted solves.
//! - [`spectrum`]: negative-eigenvalue counts, bisection, inverse iteration, non-resonance.
//! - [`semiflow`]: IMEX time stepping with energy and tail monitors, plus the
//!   localization, continuous-dependence and admissibility experiments.
//! - [`equilibria`]: Newton solves, Morse indices, equilibrium census, homotopy scan.
//! - [`connect`]: heteroclinic search from the trivial equilibrium.
//! - [`cli`]: TOML configuration and command orchestration.

pub mod cli;
pub mod connect;
pub mod equilibria;
pub mod error;
pub mod grid;
pub mod model;
pub mod operator;
pub mod semiflow;
pub mod spectrum;

pub use error::{Error, Result};
pub use grid::{DimMode, Field, Grid};
pub use model::{Bump, Dissipativity, Nonlinearity, NonlinearityModel, PotentialSpec};
pub use operator::{Inertia, SymTridiag, TridiagOperator};
