//! Computational confocal microscopy: Debye focal fields, per-pixel transfer
//! functions of an array detector, and the linear pixel combination that
//! maximizes in-focus over out-of-focus light.
//!
//! Pipeline:
//!
//! 1. [`debye`] computes the focal field `U(r)` of the objective.
//! 2. [`otf`] forms one transfer function per detector pixel, line or
//!    cross-shift pair and stacks them into the measurement matrix `T`.
//! 3. [`regions`] splits the grid into the focal mainlobe and the rest.
//! 4. [`optimizer`] finds the coefficients maximizing the focal ratio,
//!    optionally restricted to a truncated singular subspace of `T`.
//! 5. [`analysis`] derives defocus curves, power-vs-shift tables, NA sweeps
//!    and synthetic images.

pub mod analysis;
pub mod debye;
pub mod error;
pub mod exec;
pub mod grid;
pub mod io;
pub mod optimizer;
pub mod otf;
pub mod pipeline;
pub mod regions;

pub use error::{Error, Result};
pub use exec::Execution;
