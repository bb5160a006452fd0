//! Clock-skew measurement and drift-compensation toolkit.
//!
//! The crate measures oscillator ppm from IQ captures (a single reference
//! tone or the LTE primary synchronization signal train), predicts ppm from
//! temperature and time-of-day with an online-trained LSTM, and evaluates how
//! long a node can run between perfect resynchronizations while keeping its
//! clock offset inside a budget.
//!
//! Module map:
//!
//! - [`clock`]: ppm / offset arithmetic and offset integration between resyncs.
//! - [`signal`]: synthetic receiver captures (tone, PSS train) and resampling.
//! - [`estimate`]: the tone and PSS ppm estimators, averaging, outlier filter.
//! - [`lstm`]: the recurrent predictor, Adam training, PACF lag selection,
//!   checkpoints.
//! - [`eval`]: synthetic datasets, estimator sweeps, compensation runs, CDFs
//!   and resync-interval search.
//! - [`dataset`]: CSV measurement datasets and JSON run manifests.
//! - [`cli`]: the `clocklab` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod clock;
pub mod dataset;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod lstm;
pub mod rng;
pub mod signal;

pub use clock::{ClockOffset, OffsetSeries, Ppm};
pub use error::{Error, Result};
