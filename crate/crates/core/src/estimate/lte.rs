use std::collections::BTreeSet;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{EstimatorConfig, Method, PpmMeasurement};
use crate::clock::ppm_of;
use crate::error::{Error, Result};
use crate::signal::resample::interpolate;
use crate::signal::{IqBuffer, PssTemplate};

/// Candidates closer than this fraction of the nominal spacing to a stronger
/// peak are sidelobes or noise.
const MIN_SEPARATION_FRAC: f64 = 0.8;
const DEGRADED_COUNT_FRAC: f64 = 0.2;

/// `c[m] = Σ_i x[m + i] · conj(t[i])` for every full overlap, by overlap-save.
pub(crate) fn cross_correlate(x: &[Complex64], tpl: &[Complex64]) -> Vec<Complex64> {
    let tlen = tpl.len();
    if x.len() < tlen || tlen == 0 {
        return Vec::new();
    }
    let out_len = x.len() - tlen + 1;
    let nfft = (8 * tlen).next_power_of_two().max(4096);
    let step = nfft - tlen + 1;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);

    let mut h = vec![Complex64::new(0.0, 0.0); nfft];
    for (i, t) in tpl.iter().rev().enumerate() {
        h[i] = t.conj();
    }
    fwd.process(&mut h);
    let scale = 1.0 / nfft as f64;

    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    let mut block = vec![Complex64::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start < out_len {
        let end = (start + nfft).min(x.len());
        block[..end - start].copy_from_slice(&x[start..end]);
        block[end - start..].fill(Complex64::new(0.0, 0.0));
        fwd.process(&mut block);
        for (b, hk) in block.iter_mut().zip(&h) {
            *b *= hk * scale;
        }
        inv.process(&mut block);
        let n = step.min(out_len - start);
        out[start..start + n].copy_from_slice(&block[tlen - 1..tlen - 1 + n]);
        start += step;
    }
    out
}

/// Strongest correlation peaks, greedily accepted in order of magnitude and
/// kept at least `min_sep` samples apart. Returned in time order.
pub(crate) fn pick_peaks(mag: &[f64], threshold: f64, min_sep: usize) -> Vec<usize> {
    let mut cands: Vec<usize> = (0..mag.len())
        .filter(|&i| {
            let m = mag[i];
            m >= threshold && (i == 0 || m >= mag[i - 1]) && (i + 1 == mag.len() || m > mag[i + 1])
        })
        .collect();
    cands.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));
    let mut accepted = BTreeSet::new();
    for i in cands {
        let lo = i.saturating_sub(min_sep - 1);
        if accepted.range(lo..i + min_sep).next().is_none() {
            accepted.insert(i);
        }
    }
    accepted.into_iter().collect()
}

/// Peak position on a `1/upsample` grid within one sample of `m`, from the
/// band-limited interpolation of the complex correlation.
pub(crate) fn refine_peak(corr: &[Complex64], m: usize, upsample: usize) -> f64 {
    let u = upsample as i64;
    let mut best = (m as f64, corr[m].norm_sqr());
    for j in -u..=u {
        if j == 0 {
            continue;
        }
        let pos = m as f64 + j as f64 / upsample as f64;
        let v = interpolate(corr, pos).norm_sqr();
        if v > best.1 {
            best = (pos, v);
        }
    }
    best.0
}

/// Receiver skew from the spacing of PSS correlation peaks.
pub fn estimate_lte_ppm(buf: &IqBuffer, template: &PssTemplate, cfg: &EstimatorConfig) -> Result<PpmMeasurement> {
    cfg.validate()?;
    if (template.f_s_nom - buf.f_s_nom).abs() > 1e-9 * buf.f_s_nom {
        return Err(Error::invalid(format!(
            "template sampled at {} Hz, capture at {} Hz",
            template.f_s_nom, buf.f_s_nom
        )));
    }
    let period = template.period_samples();
    if (buf.len() as f64) < 3.0 * period {
        return Err(Error::invalid(format!("capture of {} samples spans fewer than three PSS periods", buf.len())));
    }
    let corr = cross_correlate(&buf.samples, &template.samples);
    let mag: Vec<f64> = corr.iter().map(|c| c.norm()).collect();
    let max = mag.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::MeasurementFailed("correlation is identically zero".into()));
    }
    let min_sep = (MIN_SEPARATION_FRAC * period).round().max(1.0) as usize;
    let peaks = pick_peaks(&mag, cfg.peak_threshold * max, min_sep);
    if peaks.len() < 2 {
        return Err(Error::MeasurementFailed(format!("found {} PSS peak(s), need two", peaks.len())));
    }
    let refined: Vec<f64> = peaks.iter().map(|&m| refine_peak(&corr, m, cfg.upsample_factor)).collect();

    // mean spacing over the whole train; missed peaks show up as multi-period gaps
    let span = refined[refined.len() - 1] - refined[0];
    let periods = (span / period).round();
    if periods < 1.0 {
        return Err(Error::MeasurementFailed("PSS peaks do not span a full period".into()));
    }
    let mean_spacing = span / periods;
    let f_s_hat = mean_spacing / template.period_s;
    let ppm = ppm_of(f_s_hat, buf.f_s_nom).map_err(|e| Error::MeasurementFailed(e.to_string()))?;

    let expected = (buf.nominal_span_s() / template.period_s).floor();
    let mut m = PpmMeasurement::new(0.0, None, ppm, Method::LtePss, peaks.len() as f64)?;
    m.degraded = (peaks.len() as f64 - expected).abs() > DEGRADED_COUNT_FRAC * expected;
    Ok(m)
}
