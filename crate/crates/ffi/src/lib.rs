//! C ABI over `clocklab`.
//!
//! Every function returns a [`ClkStatus`]; results go through out-pointers.
//! On failure [`clk_last_error`] gives a message for the calling thread.
//! Models are opaque [`ClkLstm`] handles owned by the caller and released
//! with [`clk_lstm_free`]. Missing training targets are passed as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use clocklab::estimate::{estimate_lte_ppm, estimate_tone_ppm, EstimatorConfig};
use clocklab::lstm::{FeatureRow, LstmModel, ModelConfig, TimeEncoding, TrainPolicy};
use clocklab::signal::{make_pss_template, IqBuffer};
use clocklab::{clock, Error, Ppm};
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClkStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    MeasurementFailed = 3,
    Parse = 4,
    Io = 5,
    Checkpoint = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(ClkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) => ClkStatus::InvalidArgument,
            Error::MeasurementFailed(_) => ClkStatus::MeasurementFailed,
            Error::Parse { .. } => ClkStatus::Parse,
            Error::Io { .. } => ClkStatus::Io,
            Error::Checkpoint(_) => ClkStatus::Checkpoint,
        };
        Fail(code, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ClkStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ClkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ClkStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("panic inside clocklab");
            ClkStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(ClkStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

fn ppm(v: f64) -> Result<Ppm, Fail> {
    Ok(Ppm::new(v)?)
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next clocklab call on the same thread.
#[no_mangle]
pub extern "C" fn clk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out_ppm` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn clk_ppm_of(f_x: f64, f_x_nom: f64, out_ppm: *mut f64) -> ClkStatus {
    guard(|| {
        *out(out_ppm, "out_ppm")? = clock::ppm_of(f_x, f_x_nom)?.value();
        Ok(())
    })
}

/// # Safety
/// `out_hz` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn clk_freq_of(ppm_value: f64, f_nom: f64, out_hz: *mut f64) -> ClkStatus {
    guard(|| {
        *out(out_hz, "out_hz")? = clock::freq_of(ppm(ppm_value)?, f_nom)?;
        Ok(())
    })
}

/// Offset in µs accrued over `dt_s` seconds at a constant residual.
///
/// # Safety
/// `out_us` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn clk_offset_step(residual_ppm: f64, dt_s: f64, out_us: *mut f64) -> ClkStatus {
    guard(|| {
        *out(out_us, "out_us")? = clock::offset_step(ppm(residual_ppm)?, dt_s)?.us();
        Ok(())
    })
}

/// Per-minute offsets in µs, reset every `resync_period` minutes.
///
/// # Safety
/// `residuals_ppm` must point to `n` readable doubles and `out_us` to
/// `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn clk_integrate_offsets(
    residuals_ppm: *const f64,
    n: usize,
    resync_period: usize,
    out_us: *mut f64,
    out_len: usize,
) -> ClkStatus {
    guard(|| {
        let r = slice(residuals_ppm, n, "residuals_ppm")?;
        if out_len < n {
            return Err(Fail(ClkStatus::BufferTooSmall, format!("output holds {out_len}, need {n}")));
        }
        if out_us.is_null() && n > 0 {
            return Err(null("out_us"));
        }
        let r = r.iter().map(|&v| ppm(v)).collect::<Result<Vec<_>, _>>()?;
        let s = clock::integrate_offsets(&r, resync_period)?;
        let dst = std::slice::from_raw_parts_mut(out_us, n);
        for (d, o) in dst.iter_mut().zip(&s.offset) {
            *d = o.us();
        }
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ClkEstimatorConfig {
    pub fft_size: usize,
    pub upsample_factor: usize,
    pub peak_threshold: f64,
    pub f_sine_nom: f64,
    pub f_s_nom: f64,
    pub include_carrier_offset: bool,
    pub f_carrier_nom: f64,
}

impl From<ClkEstimatorConfig> for EstimatorConfig {
    fn from(c: ClkEstimatorConfig) -> Self {
        EstimatorConfig {
            fft_size: c.fft_size,
            upsample_factor: c.upsample_factor,
            peak_threshold: c.peak_threshold,
            f_sine_nom: c.f_sine_nom,
            f_s_nom: c.f_s_nom,
            include_carrier_offset: c.include_carrier_offset,
            f_carrier_nom: c.f_carrier_nom,
        }
    }
}

#[no_mangle]
pub extern "C" fn clk_estimator_config_default() -> ClkEstimatorConfig {
    let d = EstimatorConfig::default();
    ClkEstimatorConfig {
        fft_size: d.fft_size,
        upsample_factor: d.upsample_factor,
        peak_threshold: d.peak_threshold,
        f_sine_nom: d.f_sine_nom,
        f_s_nom: d.f_s_nom,
        include_carrier_offset: d.include_carrier_offset,
        f_carrier_nom: d.f_carrier_nom,
    }
}

unsafe fn iq_buffer(iq: *const f32, n_samples: usize, f_s_nom: f64) -> Result<IqBuffer, Fail> {
    let raw = slice(iq, 2 * n_samples, "iq")?;
    let samples = raw.chunks_exact(2).map(|c| Complex64::new(c[0] as f64, c[1] as f64)).collect();
    Ok(IqBuffer::new(samples, f_s_nom, n_samples as f64 / f_s_nom)?)
}

/// Skew from a capture of the reference tone. `iq` holds `n_samples`
/// interleaved I/Q pairs.
///
/// # Safety
/// `iq` must point to `2 * n_samples` readable floats, `cfg` to a config and
/// `out_ppm` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn clk_estimate_tone_ppm(
    iq: *const f32,
    n_samples: usize,
    cfg: *const ClkEstimatorConfig,
    out_ppm: *mut f64,
) -> ClkStatus {
    guard(|| {
        let cfg: EstimatorConfig = (*cfg.as_ref().ok_or_else(|| null("cfg"))?).into();
        let buf = iq_buffer(iq, n_samples, cfg.f_s_nom)?;
        *out(out_ppm, "out_ppm")? = estimate_tone_ppm(&buf, &cfg)?.ppm.value();
        Ok(())
    })
}

/// Skew from a capture of the PSS train with the given root index.
///
/// # Safety
/// As for [`clk_estimate_tone_ppm`]; `out_degraded` may be null.
#[no_mangle]
pub unsafe extern "C" fn clk_estimate_lte_ppm(
    iq: *const f32,
    n_samples: usize,
    pss_root: u32,
    cfg: *const ClkEstimatorConfig,
    out_ppm: *mut f64,
    out_degraded: *mut bool,
) -> ClkStatus {
    guard(|| {
        let cfg: EstimatorConfig = (*cfg.as_ref().ok_or_else(|| null("cfg"))?).into();
        let buf = iq_buffer(iq, n_samples, cfg.f_s_nom)?;
        let t = make_pss_template(pss_root, cfg.f_s_nom)?;
        let m = estimate_lte_ppm(&buf, &t, &cfg)?;
        *out(out_ppm, "out_ppm")? = m.ppm.value();
        if let Some(d) = out_degraded.as_mut() {
            *d = m.degraded;
        }
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ClkTrainPolicy {
    pub lr: f64,
    pub n_initial: usize,
    pub n_online: usize,
    pub dt_online_min: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl From<ClkTrainPolicy> for TrainPolicy {
    fn from(p: ClkTrainPolicy) -> Self {
        TrainPolicy {
            lr: p.lr,
            n_initial: p.n_initial,
            n_online: p.n_online,
            dt_online_min: p.dt_online_min,
            batch_size: p.batch_size,
            seed: p.seed,
        }
    }
}

#[no_mangle]
pub extern "C" fn clk_train_policy_default() -> ClkTrainPolicy {
    let d = TrainPolicy::default();
    ClkTrainPolicy {
        lr: d.lr,
        n_initial: d.n_initial,
        n_online: d.n_online,
        dt_online_min: d.dt_online_min,
        batch_size: d.batch_size,
        seed: d.seed,
    }
}

/// Opaque LSTM predictor.
pub struct ClkLstm {
    model: LstmModel,
}

unsafe fn handle<'a>(h: *mut ClkLstm) -> Result<&'a mut ClkLstm, Fail> {
    h.as_mut().ok_or_else(|| null("model"))
}

unsafe fn rows(temps: *const f64, secs: *const f64, n: usize) -> Result<Vec<FeatureRow>, Fail> {
    let t = slice(temps, n, "temperature")?;
    let s = slice(secs, n, "seconds_of_day")?;
    Ok(t.iter().zip(s).map(|(&temperature_c, &seconds_of_day)| FeatureRow { temperature_c, seconds_of_day }).collect())
}

unsafe fn targets(p: *const f64, n: usize) -> Result<Vec<Option<f64>>, Fail> {
    Ok(slice(p, n, "targets")?.iter().map(|&v| (!v.is_nan()).then_some(v)).collect())
}

/// New untrained model with linear time encoding.
///
/// # Safety
/// `out_model` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn clk_lstm_new(
    hidden_size: usize,
    seq_len: usize,
    seed: u64,
    out_model: *mut *mut ClkLstm,
) -> ClkStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let cfg = ModelConfig { hidden_size, seq_len, time_encoding: TimeEncoding::Linear };
        let model = LstmModel::new(cfg, seed)?;
        *slot = Box::into_raw(Box::new(ClkLstm { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`clk_lstm_new`] or [`clk_lstm_load`] and not have
/// been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn clk_lstm_free(model: *mut ClkLstm) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Window length the model expects.
///
/// # Safety
/// `model` must be a live handle and `out_len` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn clk_lstm_seq_len(model: *mut ClkLstm, out_len: *mut usize) -> ClkStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(model)?.model.config().seq_len;
        Ok(())
    })
}

/// Initial fit on `n` consecutive minutes.
///
/// # Safety
/// `model` must be a live handle; the three arrays must each hold `n`
/// doubles; `policy` must be valid.
#[no_mangle]
pub unsafe extern "C" fn clk_lstm_train_initial(
    model: *mut ClkLstm,
    temperature_c: *const f64,
    seconds_of_day: *const f64,
    target_ppm: *const f64,
    n: usize,
    policy: *const ClkTrainPolicy,
) -> ClkStatus {
    guard(|| {
        let h = handle(model)?;
        let p: TrainPolicy = (*policy.as_ref().ok_or_else(|| null("policy"))?).into();
        h.model.train_initial(&rows(temperature_c, seconds_of_day, n)?, &targets(target_ppm, n)?, &p)?;
        Ok(())
    })
}

/// Online update on newly labelled minutes; leading NaN targets only supply
/// history. Writes the number of windows trained on to `out_windows` when it
/// is not null.
///
/// # Safety
/// As for [`clk_lstm_train_initial`].
#[no_mangle]
pub unsafe extern "C" fn clk_lstm_online_update(
    model: *mut ClkLstm,
    temperature_c: *const f64,
    seconds_of_day: *const f64,
    target_ppm: *const f64,
    n: usize,
    policy: *const ClkTrainPolicy,
    out_windows: *mut usize,
) -> ClkStatus {
    guard(|| {
        let h = handle(model)?;
        let p: TrainPolicy = (*policy.as_ref().ok_or_else(|| null("policy"))?).into();
        let k = h.model.online_update(&rows(temperature_c, seconds_of_day, n)?, &targets(target_ppm, n)?, &p)?;
        if let Some(w) = out_windows.as_mut() {
            *w = k;
        }
        Ok(())
    })
}

/// ppm predicted for the last minute of a window of `n == seq_len` minutes.
///
/// # Safety
/// `model` must be a live handle; both arrays must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn clk_lstm_predict(
    model: *mut ClkLstm,
    temperature_c: *const f64,
    seconds_of_day: *const f64,
    n: usize,
    out_ppm: *mut f64,
) -> ClkStatus {
    guard(|| {
        let h = handle(model)?;
        *out(out_ppm, "out_ppm")? = h.model.forward(&rows(temperature_c, seconds_of_day, n)?)?.value();
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path_utf8` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn clk_lstm_save(model: *mut ClkLstm, path_utf8: *const c_char) -> ClkStatus {
    guard(|| {
        let h = handle(model)?;
        h.model.save(path(path_utf8)?)?;
        Ok(())
    })
}

/// # Safety
/// `path_utf8` must be a NUL-terminated UTF-8 string and `out_model` valid for a
/// write. On failure `*out_model` is set to null.
#[no_mangle]
pub unsafe extern "C" fn clk_lstm_load(path_utf8: *const c_char, out_model: *mut *mut ClkLstm) -> ClkStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let model = LstmModel::load(path(path_utf8)?)?;
        *slot = Box::into_raw(Box::new(ClkLstm { model }));
        Ok(())
    })
}
