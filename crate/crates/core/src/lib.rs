//! Cantor-slit domains, Whitney decompositions and a Jones-type reflection
//! extension operator, with numerical checks of the Sobolev extension bounds.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cantor;
pub mod config;
pub mod dimension;
pub mod error;
pub mod extension;
pub mod fields;
pub mod regions;
pub mod stats;
pub mod whitney;

pub use error::{Error, Result};
