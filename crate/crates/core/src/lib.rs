//! Visual-dynamics analysis and memory-bounded input composition for video
//! inpainting.
//!
//! A target frame's dynamics are measured as the mean completed optical-flow
//! magnitude under its mask and the pixel change between its mask and the
//! previous one. A calibrated profile maps the combined score to a ratio of
//! temporally distant reference frames versus trailing neighbors, and the
//! configurator turns that ratio into concrete frame indices within a memory
//! budget.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod configurator;
pub mod dynamics;
pub mod error;
pub mod flow;
pub mod frame;
pub mod harmonic;
pub mod inpaint;
pub mod media_io;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod ratio;
pub mod synth;

pub use error::{Error, Result};
