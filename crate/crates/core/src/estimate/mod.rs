//! ppm estimators and the post-processing applied to their output.

mod filter;
mod lte;
mod tone;

use serde::{Deserialize, Serialize};

use crate::clock::Ppm;
use crate::error::{Error, Result};

pub use filter::{average_window, filter_outliers, FilterOutcome, MAD_SCALE, OUTLIER_CUTOFF};
pub use lte::estimate_lte_ppm;
pub use tone::estimate_tone_ppm;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    SingleTone,
    LtePss,
}

/// One oscillator-skew observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpmMeasurement {
    timestamp_s: f64,
    pub temperature_c: Option<f64>,
    pub ppm: Ppm,
    method: Method,
    /// Number of PSS peaks used, or the tone's peak-to-median ratio in dB.
    pub quality: f64,
    /// Set when the PSS peak count deviates more than 20 % from the expected.
    pub degraded: bool,
}

impl PpmMeasurement {
    pub fn new(timestamp_s: f64, temperature_c: Option<f64>, ppm: Ppm, method: Method, quality: f64) -> Result<Self> {
        if !(0.0..SECONDS_PER_DAY).contains(&timestamp_s) {
            return Err(Error::invalid(format!("timestamp {timestamp_s} is not a second of the day")));
        }
        Ok(Self { timestamp_s, temperature_c, ppm, method, quality, degraded: false })
    }

    pub fn timestamp_s(&self) -> f64 {
        self.timestamp_s
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Same measurement stamped with capture time and temperature.
    pub fn at(mut self, timestamp_s: f64, temperature_c: Option<f64>) -> Result<Self> {
        if !(0.0..SECONDS_PER_DAY).contains(&timestamp_s) {
            return Err(Error::invalid(format!("timestamp {timestamp_s} is not a second of the day")));
        }
        self.timestamp_s = timestamp_s;
        self.temperature_c = temperature_c;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// FFT length of the tone estimator; power of two.
    pub fft_size: usize,
    /// Refinement grid of PSS peak positions, in steps per sample.
    pub upsample_factor: usize,
    /// PSS candidates must exceed this fraction of the strongest correlation.
    pub peak_threshold: f64,
    pub f_sine_nom: f64,
    pub f_s_nom: f64,
    pub include_carrier_offset: bool,
    pub f_carrier_nom: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            fft_size: 1 << 22,
            upsample_factor: 16,
            peak_threshold: 0.5,
            f_sine_nom: 160e3,
            f_s_nom: 5e6,
            include_carrier_offset: false,
            f_carrier_nom: 2.4e9,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 16 {
            return Err(Error::invalid(format!("fft_size {} is not a power of two ≥ 16", self.fft_size)));
        }
        if self.upsample_factor == 0 {
            return Err(Error::invalid("upsample_factor must be at least 1"));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold < 1.0) {
            return Err(Error::invalid(format!("peak_threshold {} must lie in (0, 1)", self.peak_threshold)));
        }
        if !(self.f_s_nom > 0.0) || !(self.f_sine_nom > 0.0) {
            return Err(Error::invalid("sample rate and tone frequency must be positive"));
        }
        if self.include_carrier_offset && !(self.f_carrier_nom > 0.0) {
            return Err(Error::invalid("carrier frequency must be positive when the carrier model is on"));
        }
        Ok(())
    }
}
