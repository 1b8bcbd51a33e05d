//! Distributed leader–follower formation control for networked nonlinear
//! agents with neural-network and adaptive control.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod formation;
pub mod instance;
pub mod leader;
pub mod nn;
pub mod parallel;
pub mod policy;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
