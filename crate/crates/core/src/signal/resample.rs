//! Band-limited fractional resampling with a Kaiser-windowed sinc kernel.
//!
//! The kernel has 16 taps (half-width 8) and Kaiser β = 8. It is tabulated
//! at 2048 fractional phases and linearly interpolated between them; every
//! tabulated phase is normalized to unit DC gain.

use std::sync::OnceLock;

use num_complex::Complex64;

use super::IqBuffer;
use crate::error::{Error, Result};

pub const TAPS: usize = 16;
const HALF: i64 = (TAPS / 2) as i64;
pub const KAISER_BETA: f64 = 8.0;
const PHASES: usize = 2048;

pub const MIN_RATIO: f64 = 0.9;
pub const MAX_RATIO: f64 = 1.1;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Continuous kernel value at distance `d` samples from the output position.
pub(crate) fn kernel_at(d: f64) -> f64 {
    let half = HALF as f64;
    if d.abs() >= half {
        return 0.0;
    }
    let sinc = if d == 0.0 {
        1.0
    } else if d.fract() == 0.0 {
        0.0
    } else {
        let x = std::f64::consts::PI * d;
        x.sin() / x
    };
    let r = d / half;
    sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA)
}

struct Table {
    // (PHASES + 1) rows of TAPS coefficients; row q is for frac = q / PHASES
    coeffs: Vec<f64>,
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut coeffs = vec![0.0; (PHASES + 1) * TAPS];
        for q in 0..=PHASES {
            let frac = q as f64 / PHASES as f64;
            let row = &mut coeffs[q * TAPS..(q + 1) * TAPS];
            for (j, c) in row.iter_mut().enumerate() {
                *c = kernel_at(j as f64 - (HALF - 1) as f64 - frac);
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|c| *c /= s);
        }
        Table { coeffs }
    })
}

/// Interpolate `x` at fractional index `pos`. Samples outside `x` are zero.
#[inline]
pub fn interpolate(x: &[Complex64], pos: f64) -> Complex64 {
    let base = pos.floor();
    let frac = pos - base;
    let base = base as i64;
    let qf = frac * PHASES as f64;
    let q = (qf as usize).min(PHASES - 1);
    let w = qf - q as f64;
    let t = table();
    let lo = &t.coeffs[q * TAPS..(q + 1) * TAPS];
    let hi = &t.coeffs[(q + 1) * TAPS..(q + 2) * TAPS];
    let start = base - (HALF - 1);
    let mut acc = Complex64::new(0.0, 0.0);
    if start >= 0 && (start as usize + TAPS) <= x.len() {
        let seg = &x[start as usize..start as usize + TAPS];
        for j in 0..TAPS {
            let c = lo[j] + w * (hi[j] - lo[j]);
            acc += seg[j] * c;
        }
    } else {
        for j in 0..TAPS {
            let idx = start + j as i64;
            if idx >= 0 && (idx as usize) < x.len() {
                let c = lo[j] + w * (hi[j] - lo[j]);
                acc += x[idx as usize] * c;
            }
        }
    }
    acc
}

/// `out[n] = x(offset + n / ratio)` for `n` in `range`, written into `out[n]`.
pub(crate) fn resample_range(
    x: &[Complex64],
    ratio: f64,
    offset: f64,
    out: &mut [Complex64],
    range: std::ops::Range<usize>,
) {
    let step = 1.0 / ratio;
    for n in range {
        out[n] = interpolate(x, offset + n as f64 * step);
    }
}

pub(crate) fn check_ratio(ratio: f64) -> Result<()> {
    if !(MIN_RATIO..=MAX_RATIO).contains(&ratio) {
        return Err(Error::invalid(format!("resampling ratio {ratio} outside [{MIN_RATIO}, {MAX_RATIO}]")));
    }
    Ok(())
}

/// Evaluate the input at positions `n / ratio`. Output length is
/// `floor(len · ratio)`; the nominal sample rate is unchanged, so a tone at
/// `f` comes out at `f / ratio`.
pub fn resample(buf: &IqBuffer, ratio: f64) -> Result<IqBuffer> {
    check_ratio(ratio)?;
    let out_len = (buf.samples.len() as f64 * ratio).floor() as usize;
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    resample_range(&buf.samples, ratio, 0.0, &mut out, 0..out_len);
    Ok(IqBuffer { samples: out, f_s_nom: buf.f_s_nom, duration_s: buf.duration_s })
}
