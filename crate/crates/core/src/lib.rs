//! Principal flows: unit-speed, time-independent planar velocity fields whose
//! trajectories sweep through an observed point cloud.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffcore`]: a small multilayer perceptron with a hand-written reverse pass.
//! - [`field`]: the soft-normalised velocity field built on top of the network,
//!   plus analytic fields used as test oracles.
//! - [`integrate`]: fixed-step Euler / RK4 integration, flow maps and the
//!   unrolled backward pass through the solver.
//! - [`loss`]: the two-sided nearest-neighbour trajectory/data loss and the
//!   auxiliary penalties used when fitting oscillators.
//! - [`train`]: initial-condition sampling, Adam and the principal-flow fitting loop.
//! - [`ftle`]: finite-time Lyapunov exponents on a rectangular grid.
//! - [`prc`]: amplitude-kick phase response curves and fitting a field to one.
//! - [`data`]: synthetic "C" / "Y" shaped point clouds and point-cloud CSV I/O.
//!
//! With the default `parallel` feature, batch work (trajectory rollouts, grid
//! advection, nearest-neighbour queries) runs on rayon. Every reduction is done
//! afterwards in canonical index order, so results are bit-identical with and
//! without the feature. [`par::set_parallel`] toggles rayon at run time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diffcore;
mod error;
pub mod field;
pub mod ftle;
pub mod integrate;
pub mod loss;
pub mod par;
pub mod prc;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
pub use field::StateVector;
