//! Numerical core of `cyclevc`: cycle-consistent adversarial conversion of
//! mel-cepstral feature sequences between two unpaired speakers.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no I/O. File
//! formats, checkpoints and the command line live in the `cyclevc` crate.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod error;
pub mod features;
pub mod gradcheck;
pub mod grid;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod ops;
pub mod optim;
pub mod real;
pub mod synth;
pub mod tape;
pub mod training;

pub use error::{Error, Result};
pub use grid::{Grid, Shape};
pub use real::Real;
pub use tape::{Tape, Var};
