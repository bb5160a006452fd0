use serde::{Deserialize, Serialize};

use super::cdf::cdf_of;
use super::compensation::{CompMethod, Evaluator};
use crate::error::{Error, Result};

/// Largest interval considered, in minutes.
pub const SCAN_CAP_MIN: usize = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub method: CompMethod,
    /// Zero when even one-minute resyncs miss the target.
    pub minutes: usize,
    /// `P(|offset| ≤ threshold)` at the reported interval (or at one minute
    /// when nothing satisfies).
    pub prob: f64,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntervalQuery {
    pub threshold_us: f64,
    pub prob: f64,
    pub cap_min: usize,
    pub n_online: usize,
}

impl Default for IntervalQuery {
    fn default() -> Self {
        Self { threshold_us: 10.0, prob: 0.9, cap_min: SCAN_CAP_MIN, n_online: 6 }
    }
}

/// Longest resync interval on the one-minute grid `1..=cap` at which
/// `P(|offset| ≤ threshold) ≥ prob`. The satisfaction curve need not be
/// monotone, so every candidate is tried from the cap downwards.
pub fn resync_interval_for(ev: &Evaluator, method: CompMethod, q: &IntervalQuery) -> Result<IntervalResult> {
    if !(q.threshold_us > 0.0) {
        return Err(Error::invalid(format!("threshold {} µs must be positive", q.threshold_us)));
    }
    if !(q.prob > 0.0 && q.prob < 1.0) {
        return Err(Error::invalid(format!("probability {} must lie in (0, 1)", q.prob)));
    }
    if q.cap_min == 0 {
        return Err(Error::invalid("scan cap must be at least one minute"));
    }
    let mut last = 0.0;
    for dt in (1..=q.cap_min).rev() {
        let run = ev.run(method, dt, q.n_online)?;
        let p = cdf_of(&run)?.prob_at(q.threshold_us);
        if p >= q.prob {
            return Ok(IntervalResult { method, minutes: dt, prob: p, diagnostic: None });
        }
        last = p;
    }
    Ok(IntervalResult {
        method,
        minutes: 0,
        prob: last,
        diagnostic: Some(format!(
            "{}: only {:.1} % of minutes within {} µs even with one-minute resyncs",
            method.name(),
            100.0 * last,
            q.threshold_us
        )),
    })
}

/// Mean |offset| of online-LSTM runs at interval `dt` for each epoch count.
pub fn sweep_n_online(ev: &Evaluator, dt: usize, grid: &[usize]) -> Result<Vec<(usize, f64)>> {
    if grid.is_empty() {
        return Err(Error::invalid("n_online grid is empty"));
    }
    grid.iter().map(|&n| Ok((n, ev.run(CompMethod::OnlineLstm, dt, n)?.mean_abs_offset_us()))).collect()
}
