//! Jerk-level whole-body momentum control with contact-stable wrench
//! parametrization.
//!
//! Contact wrenches are written as `f = φ(ξ)` for free variables `ξ`, so any
//! `ξ` yields a wrench satisfying friction, unilaterality, center-of-pressure
//! and torsional constraints. Controllers choose `ξ̇`, and joint torques follow
//! from the rigid-contact dynamics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod linalg;
pub mod momentum;
pub mod sim;
pub mod sot;
pub mod verify;
pub mod wrench;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use wrench::{ContactGeometry, SaturationPolicy, Wrench, WrenchStack, Xi, XiStack};
