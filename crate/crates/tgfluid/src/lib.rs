// Negated comparisons reject NaN along with out-of-range values; index
// loops mirror the stencil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attractor;
pub mod error;
pub mod io;
pub mod leray;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod par;
pub mod params;
pub mod sampling;
pub mod noise;
pub mod ode;
pub mod solver;
pub mod stats;
