//! Learned-Koopman control of nonlinear plants over fading wireless links.
//!
//! The crate is `no_std` with `alloc`. Randomness always comes from
//! caller-seeded ChaCha streams so every run is reproducible.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod channel;
pub mod control;
pub mod dynamics;
pub mod errmodel;
pub mod error;
pub mod harness;
pub mod koopman;
pub mod nn;
pub mod scheduler;

pub use error::{Error, Result};
