//! Synthetic receiver captures.
//!
//! A receiver whose oscillator runs `δ` ppm fast takes `1 + δ·1e-6` times as
//! many samples per true second as it believes. Both generators build the
//! signal on the true-time grid at the nominal rate and then resample it by
//! that ratio, so the same mechanism realizes the skew for the tone and the
//! PSS train. When the carrier model is enabled the shared oscillator also
//! shifts the local oscillator by `f_c·δ·1e-6`, which appears as a baseband
//! frequency offset before sampling.

pub mod pss;
pub mod resample;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::clock::Ppm;
use crate::error::{Error, Result};
use crate::rng;

pub use pss::{make_pss_template, PssTemplate};
pub use resample::resample;

/// Largest receiver skew accepted by the channel model.
pub const MAX_CHANNEL_PPM: f64 = 50.0;

/// Guard samples synthesized on either side of the true-time grid so the
/// resampling kernel never reaches past the signal.
const GUARD: usize = 16;

/// Complex baseband capture.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    pub samples: Vec<Complex64>,
    /// Sample rate the receiver believes it runs at.
    pub f_s_nom: f64,
    /// True duration of the capture.
    pub duration_s: f64,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex64>, f_s_nom: f64, duration_s: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("IQ buffer must not be empty"));
        }
        if !(f_s_nom > 0.0) || !f_s_nom.is_finite() {
            return Err(Error::invalid(format!("sample rate must be positive, got {f_s_nom}")));
        }
        Ok(Self { samples, f_s_nom, duration_s })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Span of the capture as seen by the receiver's own clock.
    pub fn nominal_span_s(&self) -> f64 {
        self.samples.len() as f64 / self.f_s_nom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Receiver oscillator skew.
    pub ppm: Ppm,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub include_carrier_offset: bool,
    pub f_carrier_nom: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { ppm: Ppm::ZERO, snr_db: None, include_carrier_offset: false, f_carrier_nom: 2.4e9, seed: 0 }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ppm.value().abs() > MAX_CHANNEL_PPM {
            return Err(Error::invalid(format!("channel skew {} exceeds ±{MAX_CHANNEL_PPM} ppm", self.ppm.value())));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::invalid("snr_db must be finite"));
            }
        }
        if self.include_carrier_offset && !(self.f_carrier_nom > 0.0) {
            return Err(Error::invalid("carrier frequency must be positive when the carrier model is on"));
        }
        Ok(())
    }

    /// Sampling ratio `1 + δ·1e-6`.
    pub fn ratio(&self) -> f64 {
        1.0 + self.ppm.value() * 1e-6
    }

    /// Local-oscillator frequency error in Hz (zero with the carrier model off).
    pub fn carrier_offset_hz(&self) -> f64 {
        if self.include_carrier_offset {
            self.f_carrier_nom * self.ppm.value() * 1e-6
        } else {
            0.0
        }
    }
}

fn sample_count(duration_s: f64, f_s_nom: f64, ratio: f64) -> usize {
    (duration_s * f_s_nom * ratio).round() as usize
}

/// Add circular Gaussian noise at `snr_db` relative to `signal_power`.
fn add_noise(samples: &mut [Complex64], snr_db: f64, signal_power: f64, seed: u64) {
    let var = signal_power / 10f64.powf(snr_db / 10.0);
    let sigma = (var / 2.0).sqrt();
    let mut rng = rng::stream(seed, 0x004e_015e);
    for s in samples.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s += Complex64::new(sigma * re, sigma * im);
    }
}

/// Apparent baseband frequency of a tone after the channel.
pub fn apparent_tone_hz(f_sine_nom: f64, cfg: &ChannelConfig) -> f64 {
    (f_sine_nom - cfg.carrier_offset_hz()) / cfg.ratio()
}

/// Single reference tone received through a skewed receiver.
pub fn gen_single_tone(f_sine_nom: f64, cfg: &ChannelConfig, f_s_nom: f64, duration_s: f64) -> Result<IqBuffer> {
    cfg.validate()?;
    if !(f_s_nom > 0.0) {
        return Err(Error::invalid(format!("sample rate must be positive, got {f_s_nom}")));
    }
    if !(f_sine_nom > 0.0 && f_sine_nom < f_s_nom / 2.0) {
        return Err(Error::invalid(format!("tone {f_sine_nom} Hz must lie in (0, f_s/2)")));
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::invalid(format!("duration must be positive, got {duration_s}")));
    }
    let f_app = apparent_tone_hz(f_sine_nom, cfg);
    if f_app.abs() >= f_s_nom / 2.0 {
        return Err(Error::invalid(format!("apparent tone {f_app} Hz aliases at {f_s_nom} sps")));
    }
    let ratio = cfg.ratio();
    let out_len = sample_count(duration_s, f_s_nom, ratio);
    if out_len == 0 {
        return Err(Error::invalid("capture too short for a single sample"));
    }
    // baseband tone on the true-time grid, with guard samples at both ends
    let f_base = f_sine_nom - cfg.carrier_offset_hz();
    let cycles = f_base / f_s_nom;
    let phase0 = rng::stream(cfg.seed, 0x70_4e).random::<f64>();
    let in_len = (out_len as f64 / ratio).ceil() as usize + 2 * GUARD;
    let input: Vec<Complex64> = (0..in_len)
        .map(|m| {
            let turns = ((m as f64 - GUARD as f64) * cycles + phase0).fract();
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * turns)
        })
        .collect();
    let mut samples = vec![Complex64::new(0.0, 0.0); out_len];
    resample::resample_range(&input, ratio, GUARD as f64, &mut samples, 0..out_len);
    if let Some(snr) = cfg.snr_db {
        add_noise(&mut samples, snr, 1.0, cfg.seed);
    }
    IqBuffer::new(samples, f_s_nom, duration_s)
}

/// Train of PSS symbols, one every `template.period_s` of true time,
/// received through a skewed receiver. The first symbol starts at a
/// seed-dependent fractional offset within the first period.
///
/// Symbols are scaled to unit per-sample power. `snr_db` is measured against
/// the mean power of the capture, so the SNR inside a symbol is higher by the
/// inverse duty cycle (about 18.8 dB at 5 Msps).
pub fn gen_pss_train(template: &PssTemplate, cfg: &ChannelConfig, duration_s: f64) -> Result<IqBuffer> {
    cfg.validate()?;
    if !(duration_s >= 3.0 * template.period_s) || !duration_s.is_finite() {
        return Err(Error::invalid(format!("PSS capture of {duration_s} s is shorter than three periods")));
    }
    let f_s = template.f_s_nom;
    let ratio = cfg.ratio();
    let out_len = sample_count(duration_s, f_s, ratio);
    let true_len = duration_s * f_s;
    let period = template.period_samples();
    let wave = template.waveform().with_scale(1.0);
    let sym_len = wave.symbol_len;
    let energy: f64 = (0..template.samples.len()).map(|n| wave.at(n as f64).norm_sqr()).sum();
    let wave = wave.with_scale((template.samples.len() as f64 / energy).sqrt());

    let first = rng::stream(cfg.seed, 0x955).random::<f64>() * period;
    let cfo_cycles = -cfg.carrier_offset_hz() / f_s;

    let in_len = (out_len as f64 / ratio).ceil() as usize + 2 * GUARD + sym_len.ceil() as usize;
    let mut input = vec![Complex64::new(0.0, 0.0); in_len];
    let mut spans = Vec::new();
    let mut k = 0usize;
    loop {
        let start = first + k as f64 * period;
        if start + sym_len > true_len {
            break;
        }
        let lo = start.ceil() as usize;
        let hi = ((start + sym_len).ceil() as usize).min(in_len - 2 * GUARD);
        for m in lo..hi {
            let mut v = wave.at(m as f64 - start);
            if cfo_cycles != 0.0 {
                v *= Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (m as f64 * cfo_cycles).fract());
            }
            input[m + GUARD] = v;
        }
        spans.push((lo, hi));
        k += 1;
    }

    // resample only around the symbols; the kernel sees zeros elsewhere
    let mut samples = vec![Complex64::new(0.0, 0.0); out_len];
    for (lo, hi) in spans {
        let n_lo = ((lo as f64 - GUARD as f64) * ratio).floor().max(0.0) as usize;
        let n_hi = (((hi + GUARD) as f64) * ratio).ceil() as usize;
        let n_hi = n_hi.min(out_len);
        if n_lo < n_hi {
            resample::resample_range(&input, ratio, GUARD as f64, &mut samples, n_lo..n_hi);
        }
    }
    if let Some(snr) = cfg.snr_db {
        // SNR refers to the mean power of the whole capture, gaps included
        let power = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
        add_noise(&mut samples, snr, power, cfg.seed);
    }
    IqBuffer::new(samples, f_s, duration_s)
}

/// Sidecar metadata for raw IQ files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqMetadata {
    pub f_s_nom: f64,
    pub ppm: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub duration_s: f64,
}

/// Path of the JSON sidecar next to a raw IQ file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Write interleaved little-endian f32 I/Q pairs plus a `<path>.json` sidecar.
pub fn write_iq(path: &Path, buf: &IqBuffer, meta: &IqMetadata) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for s in &buf.samples {
        w.write_all(&(s.re as f32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
        w.write_all(&(s.im as f32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub fn read_iq(path: &Path) -> Result<(IqBuffer, IqMetadata)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: IqMetadata = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: side.clone(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(f).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{} bytes is not a whole number of f32 I/Q pairs", bytes.len()),
        });
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    let buf = IqBuffer::new(samples, meta.f_s_nom, meta.duration_s)?;
    Ok((buf, meta))
}
