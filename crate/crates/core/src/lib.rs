//! Core library for socially aware human search and approach.
//!
//! The math layer (geometry, state grid, kernels, reward learning) is generic
//! over `f32`/`f64`; the aliases below fix it to `f64` for application code.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demo;
pub mod distill;
pub mod field;
pub mod geom;
pub mod kdmrl;
pub mod kernel;
pub mod linalg;
pub mod map;
pub mod perception;
pub mod planner;
pub mod plot;
pub mod prior;
pub mod scalar;
pub mod search;
pub mod seed;
pub mod sim;
pub mod state;
pub mod theory;

pub use scalar::Scalar;

pub type Pose = geom::Pose2D<f64>;
pub type State = state::ApproachState<f64>;
pub type Grid = state::StateGrid<f64>;
pub type Field = field::RewardField<f64>;
pub type Traj = geom::Trajectory<f64>;
