//! LTE primary synchronization signal.
//!
//! The PSS is a length-63 Zadoff-Chu sequence with its middle element
//! punctured, mapped onto the 62 subcarriers around DC (15 kHz spacing).
//! The time-domain symbol is the trigonometric polynomial over those
//! subcarriers, which lets us sample it at any rate and at any fractional
//! delay without a separate rate converter.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const PSS_ROOTS: [u32; 3] = [25, 29, 34];
pub const PSS_PERIOD_S: f64 = 5e-3;
pub const SUBCARRIER_SPACING_HZ: f64 = 15_000.0;
pub const BASE_RATE_HZ: f64 = 1.92e6;
const ZC_LEN: u32 = 63;

/// Frequency-domain PSS sequence `d_u(n)`, `n = 0..62`.
pub fn zadoff_chu_pss(root: u32) -> Result<Vec<Complex64>> {
    if !PSS_ROOTS.contains(&root) {
        return Err(Error::invalid(format!("PSS root must be one of {PSS_ROOTS:?}, got {root}")));
    }
    let u = root as f64;
    let n63 = ZC_LEN as f64;
    Ok((0..62u32)
        .map(|n| {
            let m = if n < 31 { n as f64 * (n as f64 + 1.0) } else { (n as f64 + 1.0) * (n as f64 + 2.0) };
            Complex64::from_polar(1.0, -std::f64::consts::PI * u * m / n63)
        })
        .collect())
}

/// Subcarrier index of sequence element `n`: -31..-1, then +1..+31.
fn subcarrier(n: usize) -> i32 {
    if n < 31 {
        n as i32 - 31
    } else {
        n as i32 - 30
    }
}

/// Continuous-time PSS symbol sampled at `f_s`.
#[derive(Debug, Clone)]
pub(crate) struct PssWaveform {
    // (subcarrier index, coefficient)
    tones: Vec<(f64, Complex64)>,
    f_s: f64,
    scale: f64,
    /// Symbol length in samples at `f_s` (not necessarily integral).
    pub symbol_len: f64,
}

impl PssWaveform {
    fn new(root: u32, f_s: f64) -> Result<Self> {
        let d = zadoff_chu_pss(root)?;
        let tones = d.iter().enumerate().map(|(n, &c)| (subcarrier(n) as f64, c)).collect();
        Ok(Self { tones, f_s, scale: 1.0, symbol_len: f_s / SUBCARRIER_SPACING_HZ })
    }

    /// Value at `pos` samples after the symbol start. Zero outside the symbol.
    pub fn at(&self, pos: f64) -> Complex64 {
        if pos < 0.0 || pos >= self.symbol_len {
            return Complex64::new(0.0, 0.0);
        }
        let phase_step = 2.0 * std::f64::consts::PI * SUBCARRIER_SPACING_HZ * pos / self.f_s;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(k, c) in &self.tones {
            acc += c * Complex64::from_polar(1.0, k * phase_step);
        }
        acc * self.scale
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

/// PSS replica used for correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct PssTemplate {
    pub samples: Vec<Complex64>,
    pub root_index: u32,
    pub period_s: f64,
    pub f_s_nom: f64,
}

impl PssTemplate {
    pub(crate) fn waveform(&self) -> PssWaveform {
        let w = PssWaveform::new(self.root_index, self.f_s_nom).expect("validated root");
        let energy: f64 = (0..self.samples.len()).map(|n| w.at(n as f64).norm_sqr()).sum();
        w.with_scale(energy.sqrt().recip())
    }

    /// Nominal repetition period in samples.
    pub fn period_samples(&self) -> f64 {
        self.period_s * self.f_s_nom
    }
}

/// Build the unit-energy PSS replica for `root_index` sampled at `f_s_nom`.
pub fn make_pss_template(root_index: u32, f_s_nom: f64) -> Result<PssTemplate> {
    if !(f_s_nom >= BASE_RATE_HZ) || !f_s_nom.is_finite() {
        return Err(Error::invalid(format!("sample rate must be at least {BASE_RATE_HZ} Hz, got {f_s_nom}")));
    }
    let w = PssWaveform::new(root_index, f_s_nom)?;
    let len = w.symbol_len.round() as usize;
    let mut samples: Vec<Complex64> = (0..len).map(|n| w.at(n as f64)).collect();
    let energy: f64 = samples.iter().map(|s| s.norm_sqr()).sum();
    let k = energy.sqrt().recip();
    samples.iter_mut().for_each(|s| *s *= k);
    Ok(PssTemplate { samples, root_index, period_s: PSS_PERIOD_S, f_s_nom })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    #[test]
    fn rejects_unknown_root() {
        assert!(matches!(make_pss_template(26, 5e6), Err(Error::InvalidArgument(_))));
        assert!(make_pss_template(25, 1e6).is_err());
    }

    #[test]
    fn sequence_is_punctured_zadoff_chu() {
        // generic length-63 ZC with root u, element 31 removed
        for root in PSS_ROOTS {
            let d = zadoff_chu_pss(root).unwrap();
            let zc: Vec<Complex64> = (0..63u32)
                .map(|m| {
                    let a = -std::f64::consts::PI * root as f64 * (m * (m + 1)) as f64 / 63.0;
                    Complex64::from_polar(1.0, a)
                })
                .collect();
            let punctured: Vec<Complex64> = zc.iter().enumerate().filter(|(m, _)| *m != 31).map(|(_, v)| *v).collect();
            for (a, b) in d.iter().zip(&punctured) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn base_rate_matches_128_point_idft() {
        let t = make_pss_template(25, BASE_RATE_HZ).unwrap();
        assert_eq!(t.samples.len(), 128);
        let d = zadoff_chu_pss(25).unwrap();
        let mut bins = vec![Complex64::new(0.0, 0.0); 128];
        for (n, &c) in d.iter().enumerate() {
            let k = subcarrier(n);
            bins[k.rem_euclid(128) as usize] = c;
        }
        FftPlanner::new().plan_fft_inverse(128).process(&mut bins);
        let e: f64 = bins.iter().map(|v| v.norm_sqr()).sum();
        for (a, b) in t.samples.iter().zip(&bins) {
            assert!((a - b / e.sqrt()).norm() < 1e-12);
        }
    }

    #[test]
    fn unit_energy_and_length_at_5msps() {
        let t = make_pss_template(29, 5e6).unwrap();
        assert_eq!(t.samples.len(), 333);
        let e: f64 = t.samples.iter().map(|s| s.norm_sqr()).sum();
        assert!((e - 1.0).abs() < 1e-9);
        assert_eq!(t.period_s, 5e-3);
        assert!((t.period_samples() - 25_000.0).abs() < 1e-9);
    }

    #[test]
    fn autocorrelation_peak_dominates_sidelobes() {
        for root in PSS_ROOTS {
            let t = make_pss_template(root, 5e6).unwrap();
            let s = &t.samples;
            let n = s.len() as i64;
            let mut peak = 0.0;
            let mut side = 0.0f64;
            for lag in -(n - 1)..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    let j = i + lag;
                    if (0..n).contains(&j) {
                        acc += s[j as usize] * s[i as usize].conj();
                    }
                }
                // first null of the 930 kHz-wide mainlobe is ~5.4 samples out at 5 Msps
                if lag == 0 {
                    peak = acc.norm();
                } else if lag.abs() > 5 {
                    side = side.max(acc.norm());
                }
            }
            // below the 0.5 detection threshold, so thresholding alone rejects them
            assert!(side < 0.4 * peak, "root {root}: {peak} vs {side}");
        }
    }

    #[test]
    fn waveform_evaluation_matches_template() {
        let t = make_pss_template(34, 5e6).unwrap();
        let w = t.waveform();
        for n in [0usize, 17, 100, 332] {
            assert!((w.at(n as f64) - t.samples[n]).norm() < 1e-12);
        }
        assert_eq!(w.at(-0.5), Complex64::new(0.0, 0.0));
    }
}
