//! Finite-difference solver for stochastic weighted graph flow on the periodic
//! unit torus, with energy diagnostics and algebraic validators.
//!
//! The numerical core is generic over the scalar type through [`Real`]; the
//! `*64` aliases below fix it to `f64`, which is what the experiment runners use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod linalg;
pub mod noise;
pub mod scalar;
pub mod spde;
pub mod validators;
pub mod weight;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField, SymMatrixField, VectorField};
pub use noise::WienerPath;
pub use scalar::Real;
pub use spde::{Scheme, SpdeParams, State, Trajectory};
pub use weight::{WeightModel, WeightPreset};

pub type ScalarField64 = ScalarField<f64>;
pub type VectorField64 = VectorField<f64>;
pub type SymMatrixField64 = SymMatrixField<f64>;
pub type WeightModel64 = WeightModel<f64>;
pub type WienerPath64 = WienerPath<f64>;
pub type SpdeParams64 = SpdeParams<f64>;
pub type State64 = State<f64>;
pub type Trajectory64 = Trajectory<f64>;
