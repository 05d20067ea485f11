//! Interval type-2 correlation-aware fuzzy neural network.
//!
//! A rule-based regressor for nonlinear function approximation. Each rule
//! owns an affine feature transform whose rows whiten the local input
//! correlation structure, so membership functions are evaluated on decorrelated
//! coordinates at unit scale. Shape-uncertain interval type-2 sets give each
//! rule a firing interval; an adaptive type reducer with trainable mixing
//! weights collapses the interval, and rule outputs combine additively.
//!
//! The crate provides data generation and loading ([`data`]), density-based
//! rule initialization ([`init`]), hierarchical Levenberg-Marquardt training
//! ([`train`]), model persistence ([`model`]), and scripted benchmark runs
//! ([`bench`]).

pub mod bench;
pub mod data;
pub mod error;
pub mod fuzzy;
pub mod init;
pub mod model;
pub mod network;
pub mod train;

pub use error::{Error, Result};
