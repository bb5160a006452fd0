//! Evaluation on synthetic data with known ground truth: estimator sweeps,
//! compensation runs, offset CDFs and resync-interval search.

mod cdf;
mod compensation;
mod interval;
mod sweep;
mod synth;

pub use cdf::{cdf_of, CdfSummary};
pub use compensation::{CompMethod, CompensationRun, EvalConfig, Evaluator, DAY_MINUTES};
pub use interval::{resync_interval_for, sweep_n_online, IntervalQuery, IntervalResult, SCAN_CAP_MIN};
pub use sweep::{capture_seed, run_sweep, Estimator, SweepConfig, SweepRow, SweepTable};
pub use synth::{
    gen_synthetic_dataset, OscillatorProfile, SyntheticConfig, SyntheticDataset, TemperatureModel, MIN_DURATION_H,
    PPM_BOUND, TEMP_RANGE_C,
};
