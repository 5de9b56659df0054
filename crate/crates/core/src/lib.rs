//! Planar soft snake robot simulator, goal-reaching environment and offline
//! reinforcement learning trainers.

// Range checks are written as `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algo;
pub mod behavior;
pub mod container;
pub mod dataset;
pub mod disa;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod eval;
pub mod kinematics;
pub mod nn;
pub mod seeding;

pub use error::{Error, ErrorCategory, Result};
