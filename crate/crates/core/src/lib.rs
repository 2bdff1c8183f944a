//! Parametric DeepONet surrogates for structural dynamics and two-stage
//! parameter estimation on top of them.

pub mod analysis;
pub mod binio;
pub mod datagen;
pub mod diffcore;
pub mod dynamics;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod models;

pub use error::{Error, Result};
