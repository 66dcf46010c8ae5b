//! Boundary-integral engine for the heat equation in space-periodic domains.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod neumann;
pub mod potentials;
pub mod sensitivity;
pub mod transmission;

pub use error::{Error, Result};
