use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::clock::Ppm;
use crate::dataset::{MeasurementRecord, CADENCE_S};
use crate::error::{Error, Result};
use crate::estimate::SECONDS_PER_DAY;
use crate::rng;

pub const TEMP_RANGE_C: (f64, f64) = (-30.0, 85.0);
pub const PPM_BOUND: f64 = 0.5;

/// Quadratic temperature law of the node oscillator plus the noise of each
/// measurement method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillatorProfile {
    pub coeffs: [f64; 3],
    pub lte_noise_std: f64,
    pub tone_noise_std: f64,
}

impl Default for OscillatorProfile {
    fn default() -> Self {
        Self { coeffs: [0.02, 5e-3, -1e-4], lte_noise_std: 16.6e-3, tone_noise_std: 0.4e-3 }
    }
}

impl OscillatorProfile {
    pub fn validate(&self) -> Result<()> {
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("profile coefficients must be finite"));
        }
        let worst = self.max_abs_ppm(TEMP_RANGE_C.0, TEMP_RANGE_C.1);
        if worst > PPM_BOUND {
            return Err(Error::invalid(format!(
                "profile reaches {worst:.4} ppm inside [{}, {}] °C, bound is {PPM_BOUND}",
                TEMP_RANGE_C.0, TEMP_RANGE_C.1
            )));
        }
        if !(self.lte_noise_std >= 0.0) || !(self.tone_noise_std >= 0.0) {
            return Err(Error::invalid("noise standard deviations must be non-negative"));
        }
        Ok(())
    }

    pub fn ppm_at(&self, temperature_c: f64) -> f64 {
        let [c0, c1, c2] = self.coeffs;
        c0 + temperature_c * (c1 + temperature_c * c2)
    }

    /// Largest |ppm| over `[lo, hi]`: endpoints or the vertex.
    pub fn max_abs_ppm(&self, lo: f64, hi: f64) -> f64 {
        let [_, c1, c2] = self.coeffs;
        let mut pts = vec![lo, hi];
        if c2 != 0.0 {
            let v = -c1 / (2.0 * c2);
            if v > lo && v < hi {
                pts.push(v);
            }
        }
        pts.into_iter().map(|t| self.ppm_at(t).abs()).fold(0.0, f64::max)
    }
}

/// Diurnal sinusoid plus a slow AR(1) weather term, per minute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureModel {
    pub mean_c: f64,
    pub amplitude_c: f64,
    /// Phase of the diurnal sinusoid at midnight, radians.
    pub phase_rad: f64,
    /// Stationary standard deviation of the AR(1) term.
    pub ar_std_c: f64,
    /// Correlation time of the AR(1) term in minutes.
    pub ar_tau_min: f64,
}

impl Default for TemperatureModel {
    fn default() -> Self {
        Self {
            mean_c: 15.0,
            amplitude_c: 8.0,
            phase_rad: -std::f64::consts::FRAC_PI_2,
            ar_std_c: 3.0,
            ar_tau_min: 360.0,
        }
    }
}

impl TemperatureModel {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.mean_c, self.amplitude_c, self.phase_rad, self.ar_std_c].iter().all(|v| v.is_finite());
        if !ok || self.amplitude_c < 0.0 || self.ar_std_c < 0.0 || !(self.ar_tau_min > 0.0) {
            return Err(Error::invalid("temperature model needs finite values, non-negative spreads and a positive τ"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub duration_h: f64,
    /// Second of the day of the first record.
    pub start_s: f64,
    pub profile: OscillatorProfile,
    pub temperature: TemperatureModel,
    /// Linear aging of the oscillator, ppm per day, not visible in the
    /// temperature or time-of-day features.
    pub aging_ppm_per_day: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            duration_h: 70.0,
            start_s: 0.0,
            profile: OscillatorProfile::default(),
            temperature: TemperatureModel::default(),
            aging_ppm_per_day: 0.03,
            seed: 0,
        }
    }
}

pub const MIN_DURATION_H: f64 = 48.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub records: Vec<MeasurementRecord>,
}

/// One record per minute: temperature from the model, `true_ppm` from the
/// profile, measured columns as truth plus white Gaussian noise.
pub fn gen_synthetic_dataset(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.profile.validate()?;
    cfg.temperature.validate()?;
    if !(cfg.duration_h >= MIN_DURATION_H) || !cfg.duration_h.is_finite() {
        return Err(Error::invalid(format!(
            "dataset must span at least {MIN_DURATION_H} h (one day of training plus a test horizon), got {}",
            cfg.duration_h
        )));
    }
    if !(0.0..SECONDS_PER_DAY).contains(&cfg.start_s) {
        return Err(Error::invalid(format!("start {} is not a second of the day", cfg.start_s)));
    }
    if !cfg.aging_ppm_per_day.is_finite() {
        return Err(Error::invalid("aging rate must be finite"));
    }
    let n = (cfg.duration_h * 60.0).round() as usize;
    let tm = &cfg.temperature;
    let phi = (-1.0 / tm.ar_tau_min).exp();
    let innov = tm.ar_std_c * (1.0 - phi * phi).sqrt();
    let mut temp_rng = rng::stream(cfg.seed, 0x7e3);
    let mut lte_rng = rng::stream(cfg.seed, 0x17e);
    let mut tone_rng = rng::stream(cfg.seed, 0x70e);
    let mut ar = tm.ar_std_c * temp_rng.sample::<f64, _>(StandardNormal);

    let ppm = |v: f64| Ppm::new(v).map_err(|e| Error::invalid(e.to_string()));
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let elapsed = cfg.start_s + i as f64 * CADENCE_S;
        let day_angle = 2.0 * std::f64::consts::PI * elapsed / SECONDS_PER_DAY;
        let temperature_c = tm.mean_c + tm.amplitude_c * (day_angle + tm.phase_rad).sin() + ar;
        ar = phi * ar + innov * temp_rng.sample::<f64, _>(StandardNormal);
        let truth =
            cfg.profile.ppm_at(temperature_c) + cfg.aging_ppm_per_day * (i as f64 * CADENCE_S) / SECONDS_PER_DAY;
        let lte = truth + cfg.profile.lte_noise_std * lte_rng.sample::<f64, _>(StandardNormal);
        let tone = truth + cfg.profile.tone_noise_std * tone_rng.sample::<f64, _>(StandardNormal);
        records.push(MeasurementRecord {
            timestamp_s: elapsed % SECONDS_PER_DAY,
            temperature_c,
            lte_ppm: Some(ppm(lte)?),
            tone_ppm: Some(ppm(tone)?),
            true_ppm: Some(ppm(truth)?),
        });
    }
    Ok(SyntheticDataset { config: *cfg, records })
}
