use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{EstimatorConfig, Method, PpmMeasurement};
use crate::clock::Ppm;
use crate::error::{Error, Result};
use crate::signal::IqBuffer;

const MIN_SPAN_S: f64 = 10e-3;
const MIN_PEAK_TO_MEDIAN_DB: f64 = 10.0;

/// Gaussian window width as a fraction of the analysed length. Its log
/// spectrum is a parabola, so three-point interpolation on log magnitude is
/// unbiased up to truncation (edge value e^-12.5).
const GAUSS_SIGMA_FRAC: f64 = 0.1;

/// Apparent tone frequency in Hz: Gaussian-windowed FFT peak refined by a
/// parabola through the log magnitudes of the peak bin and its neighbours.
/// Also returns the peak-to-median power ratio in dB.
pub(crate) fn tone_frequency(samples: &[Complex64], f_s: f64, fft_size: usize) -> (f64, f64) {
    let n = samples.len().min(fft_size);
    let centre = (n as f64 - 1.0) / 2.0;
    let sigma = GAUSS_SIGMA_FRAC * n as f64;
    let mut spec = vec![Complex64::new(0.0, 0.0); fft_size];
    for (m, (dst, src)) in spec.iter_mut().zip(samples).enumerate() {
        let z = (m as f64 - centre) / sigma;
        *dst = src * (-0.5 * z * z).exp();
    }
    FftPlanner::new().plan_fft_forward(fft_size).process(&mut spec);

    let power: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    let (k, &peak) = power.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("fft_size > 0");
    let mut sorted = power.clone();
    let mid = sorted.len() / 2;
    let median = *sorted.select_nth_unstable_by(mid, f64::total_cmp).1;
    let ratio_db = 10.0 * (peak / median.max(f64::MIN_POSITIVE)).log10();

    let ln = |i: usize| 0.5 * power[i].max(f64::MIN_POSITIVE).ln();
    let a = ln((k + fft_size - 1) % fft_size);
    let b = ln(k);
    let c = ln((k + 1) % fft_size);
    let denom = a - 2.0 * b + c;
    let delta = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    let mut bin = k as f64 + delta;
    if bin >= fft_size as f64 / 2.0 {
        bin -= fft_size as f64;
    }
    (bin * f_s / fft_size as f64, ratio_db)
}

/// Skew that produces apparent frequency `f_app` under the configured model.
pub(crate) fn invert_tone_model(f_app: f64, cfg: &EstimatorConfig) -> f64 {
    if cfg.include_carrier_offset {
        (cfg.f_sine_nom - f_app) / (cfg.f_carrier_nom * 1e-6 + f_app * 1e-6)
    } else {
        (cfg.f_sine_nom / f_app - 1.0) * 1e6
    }
}

/// Receiver skew from a capture of the reference tone.
pub fn estimate_tone_ppm(buf: &IqBuffer, cfg: &EstimatorConfig) -> Result<PpmMeasurement> {
    cfg.validate()?;
    if buf.nominal_span_s() < MIN_SPAN_S {
        return Err(Error::invalid(format!(
            "tone capture spans {:.4} s, need at least {MIN_SPAN_S} s",
            buf.nominal_span_s()
        )));
    }
    if cfg.f_sine_nom >= buf.f_s_nom / 2.0 {
        return Err(Error::invalid("reference tone above Nyquist"));
    }
    let (f_app, ratio_db) = tone_frequency(&buf.samples, buf.f_s_nom, cfg.fft_size);
    if ratio_db < MIN_PEAK_TO_MEDIAN_DB {
        return Err(Error::MeasurementFailed(format!("no dominant spectral peak ({ratio_db:.1} dB above median)")));
    }
    let ppm = invert_tone_model(f_app, cfg);
    if !ppm.is_finite() {
        return Err(Error::MeasurementFailed(format!("apparent frequency {f_app} Hz cannot be inverted")));
    }
    PpmMeasurement::new(
        0.0,
        None,
        Ppm::new(ppm).map_err(|e| Error::MeasurementFailed(e.to_string()))?,
        Method::SingleTone,
        ratio_db,
    )
}
