#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
//! Learning forceful manipulation skills from multi-modal demonstrations.
//!
//! A skill is an attractor TP-HSMM plus one stiffness matrix per component.
//! Training converts pose/force demonstrations into virtual-attractor
//! trajectories, fits the TP-HSMM by EM and optimizes the per-component
//! stiffness under a PSD constraint. Execution decodes the most likely
//! component sequence for a scene, builds a smooth reference by linear
//! quadratic tracking and drives a simulated Cartesian impedance plant,
//! replanning online on scene changes and deviations.

extern crate alloc;

pub mod attractor;
pub mod demo;
pub mod error;
pub mod execution;
pub mod manifold;
pub mod scenario;
pub mod sequencing;
pub mod skill;
pub mod stiffness;
pub mod tphsmm;

pub use error::{Error, Result};
