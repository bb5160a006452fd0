use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95 % normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacfResult {
    /// Partial autocorrelation at lags `0..=max_lag`; `values[0] == 1`.
    pub values: Vec<f64>,
    /// Half-width of the 95 % band under the white-noise null, `1.96/√n`.
    pub confidence: f64,
    /// Lag order: the last lag before the first lag that falls inside the
    /// band (zero when lag 1 is already insignificant).
    pub selected_lag: usize,
}

impl PacfResult {
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_significant(&self, lag: usize) -> bool {
        self.values[lag].abs() > self.confidence
    }

    /// Largest significant lag: the stricter reading of the cutoff, under
    /// which every later lag lies inside the band.
    pub fn last_significant_lag(&self) -> usize {
        (1..self.values.len()).rev().find(|&k| self.is_significant(k)).unwrap_or(0)
    }
}

/// Biased sample autocovariances at lags `0..=max_lag` after removing the mean.
pub fn autocovariance(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    (0..=max_lag)
        .map(|k| (0..n - k).map(|i| (series[i] - mean) * (series[i + k] - mean)).sum::<f64>() / n as f64)
        .collect()
}

/// Sample partial autocorrelation via the Durbin-Levinson recursion.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<PacfResult> {
    if max_lag == 0 {
        return Err(Error::invalid("max_lag must be at least 1"));
    }
    if series.len() <= 3 * max_lag {
        return Err(Error::invalid(format!(
            "series of {} points is too short for {max_lag} lags (need more than {})",
            series.len(),
            3 * max_lag
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let confidence = Z95 / (series.len() as f64).sqrt();
    let acov = autocovariance(series, max_lag);
    let mut values = vec![0.0; max_lag + 1];
    values[0] = 1.0;
    if acov[0] > 0.0 {
        let r: Vec<f64> = acov.iter().map(|c| c / acov[0]).collect();
        let mut phi = vec![0.0; max_lag + 1];
        let mut prev = vec![0.0; max_lag + 1];
        let mut err = 1.0;
        for k in 1..=max_lag {
            let acc: f64 = (1..k).map(|j| prev[j] * r[k - j]).sum();
            let kk = if err > 0.0 { ((r[k] - acc) / err).clamp(-1.0, 1.0) } else { 0.0 };
            phi[k] = kk;
            for j in 1..k {
                phi[j] = prev[j] - kk * prev[k - j];
            }
            err *= 1.0 - kk * kk;
            values[k] = kk;
            prev[..=k].copy_from_slice(&phi[..=k]);
        }
    }
    let selected_lag = (1..=max_lag).find(|&k| values[k].abs() <= confidence).map_or(max_lag, |k| k - 1);
    Ok(PacfResult { values, confidence, selected_lag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar(coef: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let burn = 500;
        let mut x = vec![0.0; n + burn];
        for i in 0..n + burn {
            let e: f64 = StandardNormal.sample(&mut r);
            x[i] = e + coef.iter().enumerate().filter(|(j, _)| i > *j).map(|(j, c)| c * x[i - j - 1]).sum::<f64>();
        }
        x.split_off(burn)
    }

    #[test]
    fn ar1_recovers_coefficient() {
        let p = pacf(&ar(&[0.9], 4000, 1), 25).unwrap();
        assert!((p.values[1] - 0.9).abs() < 0.03, "{}", p.values[1]);
        let outside = (2..=25).filter(|&k| p.is_significant(k)).count();
        assert!(outside <= 3);
    }

    #[test]
    fn ar2_cuts_off_after_two() {
        let hits = (0..20).filter(|&s| pacf(&ar(&[0.5, 0.3], 4000, s), 25).unwrap().selected_lag == 2).count();
        assert!(hits >= 17, "{hits}");
    }

    #[test]
    fn ar2_lag_two_equals_phi2() {
        // for AR(2), the lag-2 partial autocorrelation is the second coefficient
        let p = pacf(&ar(&[0.5, 0.3], 20_000, 9), 5).unwrap();
        assert!((p.values[2] - 0.3).abs() < 0.03);
    }

    #[test]
    fn white_noise_mostly_inside_band() {
        let p = pacf(&ar(&[], 4000, 2), 25).unwrap();
        let outside = (1..=25).filter(|&k| p.is_significant(k)).count();
        assert!(outside as f64 <= 0.1 * 25.0, "{outside}");
    }

    #[test]
    fn matches_regression_oracle_at_lag_two() {
        // lag-2 partial autocorrelation equals the last coefficient of the
        // order-2 Yule-Walker solution, solved here in closed form
        let x = ar(&[0.6, -0.2], 3000, 4);
        let a = autocovariance(&x, 2);
        let (r1, r2) = (a[1] / a[0], a[2] / a[0]);
        let phi22 = (r2 - r1 * r1) / (1.0 - r1 * r1);
        let p = pacf(&x, 2).unwrap();
        assert!((p.values[1] - r1).abs() < 1e-12);
        assert!((p.values[2] - phi22).abs() < 1e-12);
    }

    #[test]
    fn short_series_rejected() {
        assert!(pacf(&[0.0; 75], 25).is_err());
        assert!(pacf(&[0.0; 76], 25).is_ok());
        assert!(pacf(&[1.0; 10], 0).is_err());
    }

    #[test]
    fn constant_series_has_no_structure() {
        let p = pacf(&[2.0; 100], 5).unwrap();
        assert_eq!(p.values, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.selected_lag, 0);
    }

    #[test]
    fn last_significant_lag_reads_from_the_end() {
        let p = PacfResult { values: vec![1.0, 0.5, 0.01, 0.2, 0.0], confidence: 0.1, selected_lag: 1 };
        assert_eq!(p.last_significant_lag(), 3);
    }

    proptest! {
        #[test]
        fn values_are_bounded(v in prop::collection::vec(-100.0f64..100.0, 40..200)) {
            let p = pacf(&v, 10).unwrap();
            prop_assert_eq!(p.values[0], 1.0);
            prop_assert!(p.values.iter().all(|x| x.abs() <= 1.0 + 1e-9));
        }
    }
}
