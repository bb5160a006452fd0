use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::Ppm;
use crate::error::{Error, Result};
use crate::estimate::{estimate_lte_ppm, estimate_tone_ppm, EstimatorConfig};
use crate::rng;
use crate::signal::{gen_pss_train, gen_single_tone, make_pss_template, ChannelConfig, MAX_CHANNEL_PPM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Tone,
    Lte,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tone" => Ok(Estimator::Tone),
            "lte" => Ok(Estimator::Lte),
            _ => Err(Error::invalid(format!("unknown estimator `{s}` (tone or lte)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub estimator: Estimator,
    pub start_ppm: f64,
    pub stop_ppm: f64,
    pub step_ppm: f64,
    pub reps: usize,
    /// `None` for noiseless captures.
    pub snr_db: Option<f64>,
    pub duration_s: f64,
    pub pss_root: u32,
    pub estimator_config: EstimatorConfig,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::Lte,
            start_ppm: -0.5,
            stop_ppm: 0.5,
            step_ppm: 0.025,
            reps: 10,
            snr_db: Some(20.0),
            duration_s: 1.0,
            pss_root: 25,
            estimator_config: EstimatorConfig::default(),
            seed: 0,
        }
    }
}

impl SweepConfig {
    /// Grid points `start + k·step` up to `stop` inclusive.
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.step_ppm > 0.0) || !(self.stop_ppm >= self.start_ppm) {
            return Err(Error::invalid("sweep needs a positive step and stop ≥ start"));
        }
        let n = ((self.stop_ppm - self.start_ppm) / self.step_ppm + 1e-9).floor() as usize + 1;
        let grid: Vec<f64> = (0..n).map(|k| self.start_ppm + k as f64 * self.step_ppm).collect();
        if grid.iter().any(|d| d.abs() > MAX_CHANNEL_PPM) {
            return Err(Error::invalid(format!("sweep leaves the ±{MAX_CHANNEL_PPM} ppm channel range")));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ppm: f64,
    /// Mean of `estimate − truth` (accuracy).
    pub bias: f64,
    /// Sample standard deviation of the error (precision).
    pub precision: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub pooled_bias: f64,
    /// Standard deviation of all errors about their grand mean.
    pub pooled_std: f64,
    pub failures: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// Seed of repetition `rep` at grid point `k`.
pub fn capture_seed(seed: u64, k: usize, rep: usize) -> u64 {
    rng::mix(seed, ((k as u64) << 32) | rep as u64)
}

/// Estimate every grid point `reps` times from fresh captures. Failed
/// estimates are counted, not fatal. Captures run in parallel; the result
/// does not depend on scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    if cfg.reps < 10 {
        return Err(Error::invalid(format!("a sweep needs at least 10 repetitions, got {}", cfg.reps)));
    }
    cfg.estimator_config.validate()?;
    let grid = cfg.grid()?;
    let template = match cfg.estimator {
        Estimator::Lte => Some(make_pss_template(cfg.pss_root, cfg.estimator_config.f_s_nom)?),
        Estimator::Tone => None,
    };
    let est = &cfg.estimator_config;
    // validate the channel once so bad settings fail loudly rather than as
    // per-capture failures
    ChannelConfig {
        ppm: Ppm::ZERO,
        snr_db: cfg.snr_db,
        include_carrier_offset: est.include_carrier_offset,
        f_carrier_nom: est.f_carrier_nom,
        seed: 0,
    }
    .validate()?;

    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|k| (0..cfg.reps).map(move |r| (k, r))).collect();
    let outcomes: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(k, rep)| {
            let delta = grid[k];
            let ch = ChannelConfig {
                ppm: Ppm::new(delta).ok()?,
                snr_db: cfg.snr_db,
                include_carrier_offset: est.include_carrier_offset,
                f_carrier_nom: est.f_carrier_nom,
                seed: capture_seed(cfg.seed, k, rep),
            };
            let m = match &template {
                None => gen_single_tone(est.f_sine_nom, &ch, est.f_s_nom, cfg.duration_s)
                    .and_then(|b| estimate_tone_ppm(&b, est)),
                Some(t) => gen_pss_train(t, &ch, cfg.duration_s).and_then(|b| estimate_lte_ppm(&b, t, est)),
            };
            m.ok().map(|m| m.ppm.value() - delta)
        })
        .collect();

    let mut rows = Vec::with_capacity(grid.len());
    let mut all = Vec::new();
    for (k, &delta) in grid.iter().enumerate() {
        let slice = &outcomes[k * cfg.reps..(k + 1) * cfg.reps];
        let errors: Vec<f64> = slice.iter().flatten().copied().collect();
        let (bias, precision) = mean_std(&errors);
        all.extend_from_slice(&errors);
        rows.push(SweepRow {
            ppm: delta,
            bias,
            precision,
            n_ok: errors.len(),
            n_failed: cfg.reps - errors.len(),
            errors,
        });
    }
    let (pooled_bias, pooled_std) = mean_std(&all);
    let failures = rows.iter().map(|r| r.n_failed).sum();
    Ok(SweepTable { rows, pooled_bias, pooled_std, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_41_points() {
        let g = SweepConfig::default().grid().unwrap();
        assert_eq!(g.len(), 41);
        assert!((g[0] + 0.5).abs() < 1e-12 && (g[40] - 0.5).abs() < 1e-12);
        assert!(g[20].abs() < 1e-12);
    }

    #[test]
    fn rejects_too_few_reps() {
        assert!(run_sweep(&SweepConfig { reps: 9, ..Default::default() }).is_err());
    }

    #[test]
    fn small_noiseless_tone_sweep() {
        let cfg = SweepConfig {
            estimator: Estimator::Tone,
            start_ppm: -0.1,
            stop_ppm: 0.1,
            step_ppm: 0.1,
            snr_db: None,
            duration_s: 0.02,
            estimator_config: EstimatorConfig { fft_size: 1 << 17, ..Default::default() },
            ..Default::default()
        };
        let t = run_sweep(&cfg).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.failures, 0);
        assert!(t.pooled_bias.abs() <= 1e-3, "{}", t.pooled_bias);
        assert_eq!(run_sweep(&cfg).unwrap(), t);
    }

    #[test]
    fn failures_are_counted() {
        // a capture shorter than the tone estimator accepts fails every time
        let cfg = SweepConfig {
            estimator: Estimator::Tone,
            start_ppm: 0.0,
            stop_ppm: 0.0,
            snr_db: None,
            duration_s: 0.005,
            estimator_config: EstimatorConfig { fft_size: 1 << 16, ..Default::default() },
            ..Default::default()
        };
        let t = run_sweep(&cfg).unwrap();
        assert_eq!(t.failures, 10);
        assert_eq!(t.rows[0].n_ok, 0);
    }
}
