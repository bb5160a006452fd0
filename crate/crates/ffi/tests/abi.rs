use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use clocklab::signal::{gen_pss_train, gen_single_tone, make_pss_template, ChannelConfig};
use clocklab::Ppm;
use clocklab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(clk_last_error()) }.to_string_lossy().into_owned()
}

fn interleave(samples: &[num_complex::Complex64]) -> Vec<f32> {
    samples.iter().flat_map(|s| [s.re as f32, s.im as f32]).collect()
}

#[test]
fn clock_arithmetic() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(clk_ppm_of(5e6 + 0.5, 5e6, &mut v), ClkStatus::Ok);
        assert!((v - 0.1).abs() < 1e-9);
        assert_eq!(clk_freq_of(0.1, 5e6, &mut v), ClkStatus::Ok);
        assert!((v - (5e6 + 0.5)).abs() < 1e-9);
        assert_eq!(clk_offset_step(0.1, 60.0, &mut v), ClkStatus::Ok);
        assert!((v - 6.0).abs() < 1e-12);
        assert_eq!(clk_ppm_of(1.0, 0.0, &mut v), ClkStatus::InvalidArgument);
    }
    assert!(last_error().contains("nominal"));
    assert_eq!(unsafe { clk_ppm_of(1.0, 1.0, ptr::null_mut()) }, ClkStatus::NullPointer);
}

#[test]
fn integrate_offsets_resets() {
    let r = [0.1; 6];
    let mut out = [0.0; 6];
    let s = unsafe { clk_integrate_offsets(r.as_ptr(), 6, 3, out.as_mut_ptr(), 6) };
    assert_eq!(s, ClkStatus::Ok);
    let want = [6.0, 12.0, 18.0, 6.0, 12.0, 18.0];
    for (a, b) in out.iter().zip(want) {
        assert!((a - b).abs() < 1e-9, "{out:?}");
    }
    let mut short = [0.0; 5];
    let s = unsafe { clk_integrate_offsets(r.as_ptr(), 6, 3, short.as_mut_ptr(), 5) };
    assert_eq!(s, ClkStatus::BufferTooSmall);
    let s = unsafe { clk_integrate_offsets(r.as_ptr(), 6, 0, out.as_mut_ptr(), 6) };
    assert_eq!(s, ClkStatus::InvalidArgument);
}

#[test]
fn tone_estimate_through_abi() {
    let ch = ChannelConfig { ppm: Ppm::new(0.25).unwrap(), ..Default::default() };
    let buf = gen_single_tone(160e3, &ch, 5e6, 0.05).unwrap();
    let iq = interleave(&buf.samples);
    let mut cfg = clk_estimator_config_default();
    cfg.fft_size = 1 << 19;
    let mut ppm = 0.0;
    let s = unsafe { clk_estimate_tone_ppm(iq.as_ptr(), buf.len(), &cfg, &mut ppm) };
    assert_eq!(s, ClkStatus::Ok, "{}", last_error());
    assert!((ppm - 0.25).abs() < 1e-3, "{ppm}");

    let noise = vec![0.0f32; 2 * 100_000];
    let s = unsafe { clk_estimate_tone_ppm(noise.as_ptr(), 100_000, &cfg, &mut ppm) };
    assert_eq!(s, ClkStatus::MeasurementFailed);
}

#[test]
fn lte_estimate_through_abi() {
    let t = make_pss_template(25, 5e6).unwrap();
    let ch = ChannelConfig { ppm: Ppm::new(-0.2).unwrap(), ..Default::default() };
    let buf = gen_pss_train(&t, &ch, 0.1).unwrap();
    let iq = interleave(&buf.samples);
    let cfg = clk_estimator_config_default();
    let (mut ppm, mut degraded) = (0.0, true);
    let s = unsafe { clk_estimate_lte_ppm(iq.as_ptr(), buf.len(), 25, &cfg, &mut ppm, &mut degraded) };
    assert_eq!(s, ClkStatus::Ok, "{}", last_error());
    assert!((ppm + 0.2).abs() < 0.15, "{ppm}");
    assert!(!degraded);
    let s = unsafe { clk_estimate_lte_ppm(iq.as_ptr(), buf.len(), 7, &cfg, &mut ppm, ptr::null_mut()) };
    assert_eq!(s, ClkStatus::InvalidArgument);
}

fn day(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let secs: Vec<f64> = (0..n).map(|i| (i * 60 % 86_400) as f64).collect();
    let temps: Vec<f64> = secs.iter().map(|s| 15.0 + 8.0 * (s / 86_400.0 * std::f64::consts::TAU).sin()).collect();
    let target: Vec<f64> = temps.iter().map(|t| 0.02 + 0.005 * t - 1e-4 * t * t).collect();
    (temps, secs, target)
}

#[test]
fn lstm_handle_lifecycle() {
    let (temps, secs, target) = day(300);
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { clk_lstm_new(8, 5, 1, &mut model) }, ClkStatus::Ok);
    let mut policy = clk_train_policy_default();
    policy.n_initial = 3;
    policy.n_online = 2;
    let mut p = 0.0;
    unsafe {
        let mut l = 0;
        assert_eq!(clk_lstm_seq_len(model, &mut l), ClkStatus::Ok);
        assert_eq!(l, 5);
        let s = clk_lstm_train_initial(model, temps.as_ptr(), secs.as_ptr(), target.as_ptr(), 240, &policy);
        assert_eq!(s, ClkStatus::Ok, "{}", last_error());

        let mut online = target[235..260].to_vec();
        online[..5].fill(f64::NAN);
        let mut windows = 0;
        let s = clk_lstm_online_update(
            model,
            temps[235..].as_ptr(),
            secs[235..].as_ptr(),
            online.as_ptr(),
            25,
            &policy,
            &mut windows,
        );
        assert_eq!(s, ClkStatus::Ok, "{}", last_error());
        assert_eq!(windows, 20);

        assert_eq!(clk_lstm_predict(model, temps.as_ptr(), secs.as_ptr(), 5, &mut p), ClkStatus::Ok);
        assert!(p.is_finite());
        assert_eq!(clk_lstm_predict(model, temps.as_ptr(), secs.as_ptr(), 4, &mut p), ClkStatus::InvalidArgument);
    }

    let dir = tempfile::tempdir().unwrap();
    let file = CString::new(dir.path().join("m.bin").to_str().unwrap()).unwrap();
    let mut loaded = ptr::null_mut();
    let mut q = 0.0;
    unsafe {
        assert_eq!(clk_lstm_save(model, file.as_ptr()), ClkStatus::Ok);
        assert_eq!(clk_lstm_load(file.as_ptr(), &mut loaded), ClkStatus::Ok);
        assert_eq!(clk_lstm_predict(model, temps.as_ptr(), secs.as_ptr(), 5, &mut p), ClkStatus::Ok);
        assert_eq!(clk_lstm_predict(loaded, temps.as_ptr(), secs.as_ptr(), 5, &mut q), ClkStatus::Ok);
        clk_lstm_free(model);
        clk_lstm_free(loaded);
        clk_lstm_free(ptr::null_mut());
    }
    assert_eq!(p.to_bits(), q.to_bits());
}

#[test]
fn lstm_errors() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { clk_lstm_new(0, 5, 1, &mut model) }, ClkStatus::InvalidArgument);
    assert!(model.is_null());
    let policy = clk_train_policy_default();
    let (temps, secs, target) = day(10);
    let s = unsafe {
        clk_lstm_online_update(
            ptr::null_mut(),
            temps.as_ptr(),
            secs.as_ptr(),
            target.as_ptr(),
            10,
            &policy,
            ptr::null_mut(),
        )
    };
    assert_eq!(s, ClkStatus::NullPointer);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"garbage").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    let mut loaded = ptr::NonNull::<ClkLstm>::dangling().as_ptr();
    assert_eq!(unsafe { clk_lstm_load(bad.as_ptr(), &mut loaded) }, ClkStatus::Checkpoint);
    assert!(loaded.is_null());
    let missing = CString::new(dir.path().join("none.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { clk_lstm_load(missing.as_ptr(), &mut loaded) }, ClkStatus::Io);
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_every_symbol_and_compiles() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/clocklab.h")).unwrap();
    let src = std::fs::read_to_string(format!("{dir}/src/lib.rs")).unwrap();
    for line in src.lines().filter(|l| l.contains("extern \"C\" fn clk_")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    let Ok(cc) = which_cc() else { return };
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().join("use.c");
    std::fs::write(
        &c,
        "#include \"clocklab.h\"\nint main(void) { ClkTrainPolicy p = clk_train_policy_default(); ClkLstm *m = 0;\n\
         ClkStatus s = clk_lstm_new(24, 5, 0, &m); (void)p; clk_lstm_free(m); return s == CLK_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(format!("{dir}/include"))
        .arg(&c)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    Command::new("cc").arg("--version").output().map(|_| "cc").map_err(|_| ())
}
