//! Recurrent ppm predictor: a single LSTM layer over a short window of
//! (temperature, time-of-day) rows with a linear head, trained with Adam
//! first on an initial block of data and then online on each new batch.

mod adam;
mod checkpoint;
mod model;
mod pacf;
mod train;

pub use adam::{BETA1, BETA2, EPSILON};
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{FeatureRow, Gradient, Layout, LstmModel, ModelConfig, TimeEncoding};
pub use pacf::{autocovariance, pacf, PacfResult};
pub use train::{window_ends, TrainPolicy, TrainReport};
