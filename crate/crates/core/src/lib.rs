//! Oscillation-damping re-dispatch: grid model, small-signal analysis,
//! data-driven damping sensitivity identification and LP re-dispatch.
//!
//! The crate is `no_std` (with `alloc`); file formats and the command line live
//! in the companion `dampopt` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod closed_loop;
pub mod error;
pub mod estimator;
pub mod feature;
pub mod grid;
pub mod modal;
pub mod redispatch;

pub use error::{Error, Result};
pub use feature::{generator_features, Feature};
pub use grid::{NetworkCase, OperatingPoint, PowerFlowOptions};
