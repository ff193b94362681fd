//! Small-signal stability of grids with droop-controlled grid-forming storage.
//!
//! The pipeline runs case → Kron-reduced network → injection Jacobians →
//! state matrix → modes, with the droop sensitivity calculus, damping design
//! conditions, parameter sweeps and a nonlinear ringdown simulator built on top.

pub mod design;
pub mod devices;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod linalg;
pub mod modal;
pub mod model;
pub mod netmodel;
pub mod ringdown;
pub mod sensitivity;
pub mod statespace;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
