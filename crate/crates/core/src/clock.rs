//! Offsets, skews and ppm.
//!
//! A clock running `r` ppm fast gains `r` microseconds per second against a
//! perfect reference, so all offset arithmetic here is a product of ppm and
//! seconds with the result in microseconds.
//!
//! Offsets are tracked on a one-minute grid. Sample `i` of an
//! [`OffsetSeries`] is the offset at the *end* of minute `i`, accumulated
//! since the most recent perfect synchronization. A resync happens at the
//! start of every window of `resync_period` minutes, so the first sample of a
//! window holds exactly one minute of accumulation and the last sample holds
//! the full window (the value the clock reaches right before the next reset).

use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per sample of the offset grid.
pub const MINUTE_S: f64 = 60.0;

const PPM_LIMIT: f64 = 1e6;

/// Fractional frequency error in parts per million.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Ppm(f64);

impl Ppm {
    pub const ZERO: Ppm = Ppm(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value.abs() > PPM_LIMIT {
            return Err(Error::invalid(format!("ppm {value} is not a finite value within ±1e6")));
        }
        Ok(Ppm(value))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn abs(self) -> Ppm {
        Ppm(self.0.abs())
    }
}

impl TryFrom<f64> for Ppm {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Ppm::new(value)
    }
}

impl From<Ppm> for f64 {
    fn from(p: Ppm) -> f64 {
        p.0
    }
}

impl Add for Ppm {
    type Output = Ppm;
    fn add(self, rhs: Ppm) -> Ppm {
        Ppm(self.0 + rhs.0)
    }
}

impl Sub for Ppm {
    type Output = Ppm;
    fn sub(self, rhs: Ppm) -> Ppm {
        Ppm(self.0 - rhs.0)
    }
}

impl Neg for Ppm {
    type Output = Ppm;
    fn neg(self) -> Ppm {
        Ppm(-self.0)
    }
}

impl std::fmt::Display for Ppm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ppm", self.0)
    }
}

/// Signed clock offset in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct ClockOffset(f64);

impl ClockOffset {
    pub const ZERO: ClockOffset = ClockOffset(0.0);

    pub fn from_us(us: f64) -> Result<Self> {
        if !us.is_finite() {
            return Err(Error::invalid("clock offset must be finite"));
        }
        Ok(ClockOffset(us))
    }

    #[inline]
    pub fn us(self) -> f64 {
        self.0
    }
}

/// Offset trajectory on the one-minute grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetSeries {
    /// End time of each minute sample, seconds since the series origin.
    pub t: Vec<f64>,
    pub offset: Vec<ClockOffset>,
    /// Index of the first sample of every resync window. The clock was
    /// perfectly synchronized (offset exactly zero) at the start of each of
    /// these minutes.
    pub resync_indices: Vec<usize>,
}

impl OffsetSeries {
    pub fn len(&self) -> usize {
        self.offset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offset.is_empty()
    }

    pub fn abs_us(&self) -> impl Iterator<Item = f64> + '_ {
        self.offset.iter().map(|o| o.us().abs())
    }

    pub fn mean_abs_us(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.abs_us().sum::<f64>() / self.len() as f64
    }

    /// Fraction of samples with `|offset| <= threshold_us`.
    pub fn fraction_within(&self, threshold_us: f64) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        self.abs_us().filter(|&a| a <= threshold_us).count() as f64 / self.len() as f64
    }
}

/// ppm of a measured frequency against its nominal value.
pub fn ppm_of(f_x: f64, f_x_nom: f64) -> Result<Ppm> {
    if !(f_x_nom > 0.0) || !f_x_nom.is_finite() {
        return Err(Error::invalid(format!("nominal frequency must be positive, got {f_x_nom}")));
    }
    if !f_x.is_finite() {
        return Err(Error::invalid("frequency must be finite"));
    }
    Ppm::new((f_x - f_x_nom) / f_x_nom * 1e6)
}

/// Inverse of [`ppm_of`].
pub fn freq_of(ppm: Ppm, f_nom: f64) -> Result<f64> {
    if !(f_nom > 0.0) || !f_nom.is_finite() {
        return Err(Error::invalid(format!("nominal frequency must be positive, got {f_nom}")));
    }
    Ok(f_nom + f_nom * ppm.value() * 1e-6)
}

/// Offset accumulated over `dt` seconds at a constant residual skew.
pub fn offset_step(residual: Ppm, dt: f64) -> Result<ClockOffset> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    Ok(ClockOffset(residual.value() * dt))
}

/// Integrate per-minute residual skews into an offset trajectory, resetting
/// to zero at the start of every `resync_period`-minute window.
pub fn integrate_offsets(residuals: &[Ppm], resync_period: usize) -> Result<OffsetSeries> {
    if residuals.is_empty() {
        return Err(Error::invalid("residual series is empty"));
    }
    if resync_period == 0 {
        return Err(Error::invalid("resync period must be at least one minute"));
    }
    let n = residuals.len();
    let mut t = Vec::with_capacity(n);
    let mut offset = Vec::with_capacity(n);
    let mut resync_indices = Vec::with_capacity(n / resync_period + 1);
    let mut acc = 0.0;
    for (i, r) in residuals.iter().enumerate() {
        if i % resync_period == 0 {
            resync_indices.push(i);
            acc = 0.0;
        }
        acc += offset_step(*r, MINUTE_S)?.us();
        t.push((i + 1) as f64 * MINUTE_S);
        offset.push(ClockOffset(acc));
    }
    Ok(OffsetSeries { t, offset, resync_indices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ppms(v: &[f64]) -> Vec<Ppm> {
        v.iter().map(|&x| Ppm::new(x).unwrap()).collect()
    }

    #[test]
    fn ppm_of_examples() {
        assert_eq!(ppm_of(5.0e6, 5.0e6).unwrap().value(), 0.0);
        let p = ppm_of(5.0e6 * (1.0 + 0.5e-6), 5.0e6).unwrap().value();
        assert!((p - 0.5).abs() < 1e-9, "{p}");
        // 1200 Hz over 2.4 GHz, by hand: 1200 / 2400 = 0.5 ppm
        let p = ppm_of(2.4e9 + 1200.0, 2.4e9).unwrap().value();
        assert!((p - 0.5).abs() < 1e-9, "{p}");
    }

    #[test]
    fn nominal_must_be_positive() {
        assert!(matches!(ppm_of(1.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(ppm_of(1.0, -5.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(freq_of(Ppm::ZERO, 0.0), Err(Error::InvalidArgument(_))));
        assert!(ppm_of(1.0, f64::NAN).is_err());
    }

    #[test]
    fn freq_of_examples() {
        assert_eq!(freq_of(Ppm::ZERO, 5.0e6).unwrap(), 5.0e6);
        let f = freq_of(Ppm::new(1.0).unwrap(), 1.0e6).unwrap();
        assert!((f - 1.000001e6).abs() < 1e-9);
    }

    #[test]
    fn ppm_bounds() {
        assert!(Ppm::new(1e6).is_ok());
        assert!(Ppm::new(1e6 + 1.0).is_err());
        assert!(Ppm::new(f64::INFINITY).is_err());
        assert!(serde_json::from_str::<Ppm>("2e6").is_err());
        assert_eq!(serde_json::from_str::<Ppm>("0.25").unwrap().value(), 0.25);
    }

    #[test]
    fn offset_step_examples() {
        let p = Ppm::new(0.1).unwrap();
        assert!((offset_step(p, 1.0).unwrap().us() - 0.1).abs() < 1e-15);
        assert!((offset_step(p, 60.0).unwrap().us() - 6.0).abs() < 1e-12);
        assert_eq!(offset_step(Ppm::ZERO, 3600.0).unwrap().us(), 0.0);
        assert!(offset_step(p, 0.0).is_err());
    }

    #[test]
    fn constant_skew_sawtooth() {
        let s = integrate_offsets(&ppms(&[0.1; 100]), 25).unwrap();
        assert_eq!(s.resync_indices, vec![0, 25, 50, 75]);
        let peak = s.offset.iter().map(|o| o.us()).fold(0.0, f64::max);
        assert!((peak - 150.0).abs() < 1e-9, "{peak}");
        // minute k of each window (1-based) holds 6·k µs
        for (i, o) in s.offset.iter().enumerate() {
            let k = (i % 25 + 1) as f64;
            assert!((o.us() - 6.0 * k).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_residuals_give_zero_offsets() {
        let s = integrate_offsets(&ppms(&[0.0; 10]), 3).unwrap();
        assert!(s.offset.iter().all(|o| o.us() == 0.0));
    }

    #[test]
    fn two_step_hand_example() {
        let s = integrate_offsets(&ppms(&[1.0, -1.0]), 2).unwrap();
        assert_eq!(s.offset, vec![ClockOffset(60.0), ClockOffset(0.0)]);
        assert_eq!(s.t, vec![60.0, 120.0]);
        assert_eq!(s.resync_indices, vec![0]);
    }

    #[test]
    fn integrate_rejects_bad_input() {
        assert!(integrate_offsets(&[], 5).is_err());
        assert!(integrate_offsets(&ppms(&[0.1]), 0).is_err());
    }

    proptest! {
        #[test]
        fn ppm_freq_round_trip(f0 in 1.0f64..1e10, rel in -1e-3f64..1e-3) {
            let f = f0 * (1.0 + rel);
            let back = freq_of(ppm_of(f, f0).unwrap(), f0).unwrap();
            prop_assert!(((back - f) / f).abs() <= 1e-12);
        }

        #[test]
        fn offset_step_is_linear(a in -10.0f64..10.0, b in -10.0f64..10.0, dt in 0.1f64..1e4) {
            let pa = Ppm::new(a).unwrap();
            let pb = Ppm::new(b).unwrap();
            let sum = offset_step(pa + pb, dt).unwrap().us();
            let parts = offset_step(pa, dt).unwrap().us() + offset_step(pb, dt).unwrap().us();
            prop_assert!((sum - parts).abs() <= 1e-9 * (1.0 + sum.abs()));
            let twice = offset_step(pa, 2.0 * dt).unwrap().us();
            prop_assert!((twice - 2.0 * offset_step(pa, dt).unwrap().us()).abs() <= 1e-9 * (1.0 + twice.abs()));
        }

        #[test]
        fn shift_by_constant(
            res in proptest::collection::vec(-1.0f64..1.0, 1..200),
            period in 1usize..40,
            c in -1.0f64..1.0,
        ) {
            let base = integrate_offsets(&ppms(&res), period).unwrap();
            let shifted: Vec<f64> = res.iter().map(|r| r + c).collect();
            let moved = integrate_offsets(&ppms(&shifted), period).unwrap();
            prop_assert_eq!(&base.resync_indices, &moved.resync_indices);
            for i in 0..res.len() {
                let k = (i % period + 1) as f64;
                let d = moved.offset[i].us() - base.offset[i].us();
                prop_assert!((d - 60.0 * c * k).abs() <= 1e-9 * (1.0 + 60.0 * k));
            }
            // each window restarts from zero: first sample is exactly one minute
            for &s in &base.resync_indices {
                prop_assert_eq!(base.offset[s].us(), 60.0 * res[s]);
            }
        }

        #[test]
        fn window_bound(res in proptest::collection::vec(-1.0f64..1.0, 1..200), period in 1usize..40) {
            let s = integrate_offsets(&ppms(&res), period).unwrap();
            let maxr = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            for o in &s.offset {
                prop_assert!(o.us().abs() <= 60.0 * period as f64 * maxr + 1e-9);
            }
        }
    }
}
