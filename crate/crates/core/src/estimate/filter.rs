use std::collections::BTreeMap;

use super::PpmMeasurement;
use crate::clock::Ppm;
use crate::error::{Error, Result};

/// Consistency factor turning a MAD into a Gaussian standard deviation.
pub const MAD_SCALE: f64 = 1.4826;
/// Points further than this many scaled MADs from the median are dropped.
pub const OUTLIER_CUTOFF: f64 = 3.5;
/// Same role as `MAD_SCALE` for the mean absolute deviation (√(π/2)).
const MEAN_AD_SCALE: f64 = 1.253_314_137_315_500_3;
const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<PpmMeasurement>,
    /// Indices into the input of the discarded points.
    pub rejected: Vec<usize>,
    /// Set when the input was too short to filter and was returned as is.
    pub warning: Option<String>,
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust spread of `values` about `centre`: scaled MAD, or the scaled mean
/// absolute deviation when more than half the points sit exactly on the median.
fn robust_scale(values: &[f64], centre: f64) -> f64 {
    let dev: Vec<f64> = values.iter().map(|v| (v - centre).abs()).collect();
    let mad = median(&dev);
    if mad > 0.0 {
        return MAD_SCALE * mad;
    }
    MEAN_AD_SCALE * dev.iter().sum::<f64>() / dev.len() as f64
}

/// Drop measurements whose ppm lies more than 3.5 scaled MADs from the median.
/// Order is preserved.
pub fn filter_outliers(ms: &[PpmMeasurement]) -> FilterOutcome {
    if ms.len() < MIN_POINTS {
        return FilterOutcome {
            kept: ms.to_vec(),
            rejected: Vec::new(),
            warning: Some(format!("{} measurement(s) is too few to filter, need {MIN_POINTS}", ms.len())),
        };
    }
    let values: Vec<f64> = ms.iter().map(|m| m.ppm.value()).collect();
    let centre = median(&values);
    let scale = robust_scale(&values, centre);
    let mut out = FilterOutcome { kept: Vec::with_capacity(ms.len()), rejected: Vec::new(), warning: None };
    for (i, (m, v)) in ms.iter().zip(&values).enumerate() {
        if scale == 0.0 || (v - centre).abs() <= OUTLIER_CUTOFF * scale {
            out.kept.push(m.clone());
        } else {
            out.rejected.push(i);
        }
    }
    out
}

/// Mean of each tumbling window `[k·window_s, (k+1)·window_s)`, stamped with
/// the window start. Windows are kept apart per method; empty windows produce
/// nothing.
pub fn average_window(ms: &[PpmMeasurement], window_s: f64) -> Result<Vec<PpmMeasurement>> {
    if !(window_s > 0.0) || !window_s.is_finite() {
        return Err(Error::invalid(format!("window length {window_s} s must be positive")));
    }
    if ms.windows(2).any(|w| w[1].timestamp_s() < w[0].timestamp_s()) {
        return Err(Error::invalid("measurements are not sorted by timestamp"));
    }
    #[derive(Default)]
    struct Acc {
        ppm: f64,
        temp: f64,
        n_temp: usize,
        quality: f64,
        n: usize,
        degraded: bool,
        first: Option<PpmMeasurement>,
    }
    let mut windows: BTreeMap<(u64, super::Method), Acc> = BTreeMap::new();
    for m in ms {
        let key = ((m.timestamp_s() / window_s).floor() as u64, m.method());
        let a = windows.entry(key).or_default();
        a.ppm += m.ppm.value();
        a.quality += m.quality;
        a.n += 1;
        if let Some(t) = m.temperature_c {
            a.temp += t;
            a.n_temp += 1;
        }
        a.degraded |= m.degraded;
        a.first.get_or_insert_with(|| m.clone());
    }
    windows
        .into_iter()
        .map(|((k, _), a)| {
            let n = a.n as f64;
            let base = a.first.expect("non-empty window");
            let temp = (a.n_temp > 0).then(|| a.temp / a.n_temp as f64);
            let mut out =
                PpmMeasurement::new(k as f64 * window_s, temp, Ppm::new(a.ppm / n)?, base.method(), a.quality / n)?;
            out.degraded = a.degraded;
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::Method;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn meas(ts: f64, ppm: f64) -> PpmMeasurement {
        PpmMeasurement::new(ts, Some(20.0), Ppm::new(ppm).unwrap(), Method::LtePss, 200.0).unwrap()
    }

    fn std(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    }

    #[test]
    fn identical_window_is_unchanged() {
        let ms: Vec<_> = (0..60).map(|i| meas(i as f64, 0.25)).collect();
        let out = average_window(&ms, 60.0).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].ppm.value() - 0.25).abs() < 1e-15);
        assert_eq!(out[0].timestamp_s(), 0.0);
        assert_eq!(out[0].temperature_c, Some(20.0));
    }

    #[test]
    fn window_mean_and_start() {
        let ms = vec![meas(61.0, 1.0), meas(70.0, 2.0), meas(119.5, 3.0), meas(200.0, -1.0)];
        let out = average_window(&ms, 60.0).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].timestamp_s(), 60.0);
        assert!((out[0].ppm.value() - 2.0).abs() < 1e-15);
        assert_eq!(out[1].timestamp_s(), 180.0);
    }

    #[test]
    fn averaging_shrinks_noise_by_sqrt_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let ms: Vec<_> = (0..60 * 400).map(|i| meas(i as f64 * 1.0 % 86_400.0, normal.sample(&mut rng))).collect();
        let out = average_window(&ms, 60.0).unwrap();
        assert_eq!(out.len(), 400);
        let s = std(&out.iter().map(|m| m.ppm.value()).collect::<Vec<_>>());
        let expect = 0.01 / 60f64.sqrt();
        assert!((s / expect - 1.0).abs() < 0.2, "{s} vs {expect}");
    }

    #[test]
    fn methods_are_not_mixed() {
        let mut a = meas(0.0, 1.0);
        a = PpmMeasurement::new(a.timestamp_s(), None, a.ppm, Method::SingleTone, 30.0).unwrap();
        let out = average_window(&[a, meas(1.0, 3.0)], 60.0).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn average_rejects_bad_input() {
        assert!(average_window(&[], 60.0).unwrap().is_empty());
        assert!(average_window(&[meas(0.0, 0.0)], 0.0).is_err());
        assert!(average_window(&[meas(5.0, 0.0), meas(1.0, 0.0)], 60.0).is_err());
    }

    #[test]
    fn degraded_propagates() {
        let mut b = meas(2.0, 0.0);
        b.degraded = true;
        let out = average_window(&[meas(1.0, 0.0), b], 60.0).unwrap();
        assert!(out[0].degraded);
    }

    #[test]
    fn spike_is_removed() {
        let mut ms: Vec<_> = (0..20).map(|i| meas(i as f64, 0.0)).collect();
        ms[7] = meas(7.0, 100.0);
        let out = filter_outliers(&ms);
        assert_eq!(out.rejected, vec![7]);
        assert_eq!(out.kept.len(), 19);
        assert!(out.warning.is_none());
    }

    #[test]
    fn constant_series_is_kept() {
        let ms: Vec<_> = (0..10).map(|i| meas(i as f64, 0.3)).collect();
        assert_eq!(filter_outliers(&ms).kept, ms);
    }

    #[test]
    fn short_series_warns() {
        let ms = vec![meas(0.0, 0.0), meas(1.0, 50.0)];
        let out = filter_outliers(&ms);
        assert_eq!(out.kept, ms);
        assert!(out.warning.is_some());
    }

    #[test]
    fn clean_gaussian_mostly_retained() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.1, 0.02).unwrap();
        let ms: Vec<_> = (0..20_000).map(|i| meas((i % 86_400) as f64, normal.sample(&mut rng))).collect();
        let out = filter_outliers(&ms);
        assert!(out.kept.len() as f64 >= 0.99 * ms.len() as f64, "{}", out.kept.len());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    proptest! {
        #[test]
        fn filter_preserves_order_and_subset(v in prop::collection::vec(-10.0f64..10.0, 5..60)) {
            let ms: Vec<_> = v.iter().enumerate().map(|(i, &p)| meas(i as f64, p)).collect();
            let out = filter_outliers(&ms);
            prop_assert_eq!(out.kept.len() + out.rejected.len(), ms.len());
            let ts: Vec<f64> = out.kept.iter().map(|m| m.timestamp_s()).collect();
            prop_assert!(ts.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn window_count_matches_occupied_windows(ts in prop::collection::vec(0.0f64..3600.0, 1..100)) {
            let mut ts = ts;
            ts.sort_by(f64::total_cmp);
            let ms: Vec<_> = ts.iter().map(|&t| meas(t, t / 3600.0)).collect();
            let out = average_window(&ms, 60.0).unwrap();
            let mut keys: Vec<u64> = ts.iter().map(|t| (t / 60.0).floor() as u64).collect();
            keys.dedup();
            prop_assert_eq!(out.len(), keys.len());
        }

        #[test]
        fn window_spread_does_not_grow(v in prop::collection::vec(-1.0f64..1.0, 2..60)) {
            let ms: Vec<_> = v.iter().enumerate().map(|(i, &p)| meas(i as f64, p)).collect();
            let out = average_window(&ms, 1e6).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out[0].ppm.value() >= lo - 1e-12 && out[0].ppm.value() <= hi + 1e-12);
        }
    }
}
