//! Space-time adaptive time stepping for linear parabolic problems.
#![no_std]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod petrov;
pub mod quad;
pub mod radau;
pub mod sinc;
pub mod stats;
pub mod fem2d;
pub mod gelfand;
pub mod laplace_mor;
pub mod time_mesh;

pub use error::{Error, Result};
