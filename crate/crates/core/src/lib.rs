//! Event-triggered non-intrusive load monitoring (NILM) for edge devices.
//!
//! The crate models the full signal path of a dual-channel smart meter that
//! identifies household appliances from their switching transients:
//!
//! * [`signalgen`] synthesizes labeled voltage/current recordings for five
//!   appliance archetypes and their superpositions.
//! * [`acquisition`] models the ADC front end: sampling-rate arithmetic,
//!   quantization and the affine gain/offset calibration ("RawConv").
//! * [`features`] computes P, S, Q and odd current harmonics through a
//!   radix-2 FFT, including a variant that skips the output bit-reversal pass.
//! * [`cycles`] locks a per-mains-cycle grid onto zero crossings and
//!   synchronously resamples each cycle to 128 points.
//! * [`events`] detects switching events from per-cycle power (or current)
//!   steps and assembles the composite feature vector.
//! * [`dtw`] implements dynamic time warping and the 3×3 pre/post signature.
//! * [`neuralnet`] is a from-scratch MobileNetV3-style classifier with
//!   h-swish, squeeze-and-excitation and depthwise-separable convolutions.
//! * [`classify`] ties everything together: datasets, k-NN-DTW baseline,
//!   metrics and the end-to-end pipeline.
//! * [`bench`] reports host-side timing and analytic table memory per stage.
//!
//! Runnable walkthroughs of each capability live in the crate's `examples/`
//! directory.

// `!(x > 0.0)` is the NaN-rejecting form used by every validator.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the math in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod acquisition;
pub mod bench;
pub mod classify;
pub mod cli;
pub mod config;
pub mod cycles;
pub mod dtw;
pub mod error;
pub mod events;
pub mod features;
pub mod neuralnet;
pub mod signalgen;

pub use error::{Error, Result, Stage};

/// Nominal mains frequency in hertz.
pub const MAINS_HZ: f64 = 50.0;
/// Nominal mains RMS voltage.
pub const MAINS_VRMS: f64 = 230.0;
/// Points per resampled mains cycle.
pub const POINTS_PER_CYCLE: usize = 128;
