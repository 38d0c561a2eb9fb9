//! Geometric model, dynamics and control of a buoyant load towed by cables
//! attached to nonholonomic surface vehicles.
//!
//! The system is decomposed into load–vehicle pairs. Each pair lives on a
//! six-dimensional configuration manifold (load pose, vehicle pose) subject to
//! two no-side-slip constraints and one fixed-cable-length constraint.
//!
//! - [`geometry`]: tensors with basis tags, Levi-Civita symbols, covariant
//!   derivatives, curve integration.
//! - [`constraint`]: kinematic and constrained frames, the annihilating
//!   covectors, projections onto the constrained distribution and the
//!   constrained connection.
//! - [`dynamics`]: forced constrained dynamics, drift correction and cable
//!   tension monitoring.
//! - [`control`]: reference paths, load loop, force allocation and vehicle
//!   attitude control.
//! - [`sim`]: scenario files, closed-loop runs and output files.

pub mod constraint;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod sim;
pub mod tolerances;

pub use error::{Error, Result};
pub use geometry::{Basis, ChartPoint, CotangentVec, LinearMap, Mat6, MetricTensor, TangentVec, Vec6};
