//! Convex reformulation of two-layer ReLU network training.

// the `!(a > b)` guards in this crate are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrangements;
pub mod baseline;
pub mod cones;
pub mod error;
pub mod formats;
pub mod io;
mod lp;
pub mod lasso;
pub mod model;
pub mod reconstruct;
pub mod solver;
pub mod synth;
pub mod univariate;
pub mod wedge;

pub use error::{Error, Result};
pub use model::{
    Activation, ActivationPattern, DataMatrix, Labels, PatternSet, Provenance,
    RegularizationConvention, TwoLayerNet, WeightNorm,
};
