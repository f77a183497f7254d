//! Simulation of serial data links carried by electrolyte-filled elastomer
//! tubes.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] models the tube as a lumped impedance and turns it into a
//!   source-to-load filter.
//! * [`afe`] holds the receiver front ends: a unity-gain buffer, a
//!   non-inverting Schmitt trigger and the load each presents.
//! * [`link`] is the 8N1 UART codec plus the end-to-end link runner.
//! * [`battery`] is the two-cell zinc–iodide module used to power a node.
//! * [`duplex`] is the two-node blink-and-pulse protocol with failover.
//!
//! Everything is deterministic: identical inputs give identical outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afe;
pub mod battery;
pub mod calibration;
pub mod channel;
pub mod duplex;
mod error;
pub mod filter;
pub mod link;
pub mod waveform;

pub use calibration::Calibration;
pub use error::{Error, Result};
pub use waveform::Waveform;
