//! Tests for heterogeneous treatment effects across a chosen set of
//! effect modifiers, built on doubly robust pseudo-outcomes.

pub mod comparators;
pub mod curve;
pub mod data;
pub mod error;
pub mod inference;
pub mod nuisance;
pub mod policy;
pub mod pseudo;
pub mod rng;
pub mod simlab;

pub use error::{Error, Result};
