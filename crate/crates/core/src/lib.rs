//! Generative model over functions `p(f, z) = p(f | z) p(z)` with trainable
//! lower bounds on the entropy of the function distribution.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! the command line or threads lives in the companion `vfunc` crate.
//!
//! Layout:
//!
//! - [`tensor`]: tape-based reverse-mode autodiff, MLPs and Adam.
//! - [`dist`]: diagonal Gaussian and categorical primitives.
//! - [`model`]: prior, prediction network, diff-gradient recognition network
//!   and the variational entropy bound.
//! - [`dd`]: the dynamic discretization bound on `I(f; z)`.
//! - [`toy`]: a discrete joint small enough to enumerate, used to check both
//!   bounds against exact entropies.
//! - [`regression`] and [`gridworld`]: the two experiment families.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dd;
pub mod dist;
pub mod error;
pub mod gridworld;
pub mod math;
pub mod model;
pub mod regression;
pub mod rng;
pub mod tensor;
pub mod toy;

pub use error::{Error, Result};
