//! Numerics for the Maryland model
//! `H u(n) = u(n+1) + u(n-1) + lambda tan(pi(theta + n alpha)) u(n)`.

pub mod cf;
pub mod cocycle;
pub mod error;
pub mod indices;
pub mod interp;
pub mod operator;
pub mod strategy;
pub mod torus;
pub mod verify;

pub use error::{Error, Result};
