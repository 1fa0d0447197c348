//! Sequence-selection shaping for nonlinear optical fiber channels.
//!
//! The crate bundles the pieces needed to lower-bound the capacity of a
//! fiber channel by optimizing the input distribution with a rejection
//! sampler:
//!
//! * [`analytic`]: closed-form rates for a block-memoryless nonlinear channel;
//! * [`ssfm`]: split-step Fourier propagation, dispersion compensation and
//!   digital backpropagation;
//! * [`wdm`]: ideal Nyquist transmitter/receiver and WDM multiplexing;
//! * [`selection`]: cost functions and the rejection-sampling source;
//! * [`air`]: achievable-rate estimation with an AWGN mismatched metric;
//! * [`experiment`]: transmit–propagate–receive–estimate sweeps;
//! * [`nli_stats`]: empirical NLI-cost statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod air;
pub mod analytic;
pub mod error;
pub mod experiment;
pub mod nli_stats;
pub mod rng;
pub mod selection;
pub mod signal;
pub mod special;
mod spectral;
pub mod ssfm;
pub mod wdm;
pub mod store;

pub use error::{Error, Result};
pub use signal::{SymbolSequence, SourceConfig, Waveform, C64};
