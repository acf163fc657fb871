//! Numerical laboratory for the concentration of Haar-random rotations of a
//! diagonal matrix near the traceless-diagonal subspace, with the matching
//! closed-form asymptotics, an exact interlacing recursion, spherical-function
//! periods over flats, and the rearrangement inequalities used along the way.

// `!(x > 0.0)` is the NaN-rejecting guard used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod golden;
pub mod haar;
pub mod interlace;
pub mod lemma_sweep;
pub mod linalg;
pub mod mc;
pub mod quad;
pub mod rearrange;
pub mod spectrum;
pub mod spherical;
pub mod sweep;

pub use error::{Error, Result};
