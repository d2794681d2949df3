//! Finite-state abstractions of nonlinear sampled and discrete-time control
//! systems, built by propagating supporting half-spaces of strongly convex
//! cell supersets, plus convexity certificates and supervisor synthesis on
//! the resulting automata.

pub mod abstraction;
pub mod config;
pub mod convexity;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod oracle;
pub mod pendulum;
pub mod pipeline;
pub mod quantizer;
pub mod supervisor;
pub mod svg;

pub use error::{Error, Result};
