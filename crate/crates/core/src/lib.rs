//! Density-matrix simulation of single NV-center electron spins under
//! combined optical and microwave driving, with the pulse-sequence
//! experiments and signal analysis used to interpret them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod eseem;
pub mod io;
pub mod linalg;
pub mod liouville;
pub mod params;
pub mod sequences;
pub mod spinops;

pub use error::{Error, Result};
pub use params::SpinSystemParams;
