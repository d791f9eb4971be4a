//! Explicit-dynamics finite elements for brain tissue and the brain–skull
//! interface, with inverse calibration against force–displacement curves.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: hexahedral meshes with an embedded cohesive layer, parametric
//!   generation, a JSON file format and scaled-Jacobian quality checks.
//! - [`material`]: second-order Ogden hyperelasticity (energy, Cauchy stress,
//!   initial moduli) and the rigid tag used for bone.
//! - [`cohesive`]: traction–separation law with maximum-nominal-stress
//!   initiation and energy-based linear softening.
//! - [`solver`]: central-difference explicit integration with one-point hexes,
//!   stiffness hourglass control, cohesive elements and an energy ledger.
//! - [`calibrate`]: SQP / Nelder–Mead identification of tissue and interface
//!   parameters against a target curve.
//! - [`curve`]: the force–displacement curve type and its CSV format.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod cohesive;
pub mod curve;
pub mod material;
pub mod mesh;
pub mod model;
pub mod presets;
pub mod solver;

pub use curve::{CurveSample, ForceDisplacementCurve};
pub use model::Model;

/// 3-vector of `f64` used for positions, displacements and forces.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 matrix of `f64`.
pub type Mat3 = nalgebra::Matrix3<f64>;
