use std::ffi::CStr;
use std::ptr;

use flatlab_ffi::*;

fn spectrum(v: &[f64]) -> *mut FlatlabSpectrum {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { flatlab_spectrum_new(v.as_ptr(), v.len(), &mut h) }, FlatlabStatus::Ok);
    h
}

fn last_error() -> String {
    let p = flatlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn density_side_matches_direct_formulas() {
    let s = spectrum(&[10.0, -10.0]);
    let mut out = 0.0;
    unsafe {
        let mut vals = [0.0; 2];
        assert_eq!(flatlab_spectrum_values(s, vals.as_mut_ptr(), 2), FlatlabStatus::Ok);
        assert_eq!(vals, [-10.0, 10.0]);
        assert_eq!(flatlab_spectrum_dim(s), 2);
        assert_eq!(flatlab_tilde_beta(s, &mut out), FlatlabStatus::Ok);
        assert_eq!(out, 21.0);
        assert_eq!(flatlab_l_n(s, &mut out), FlatlabStatus::Ok);
        assert_eq!(out, 1.0);
        assert_eq!(flatlab_a_n(s, &mut out), FlatlabStatus::Ok);
        let norm = 200f64.sqrt();
        assert!((out - 1.0 / (1.0 + norm)).abs() < 1e-15);
        flatlab_spectrum_free(s);
    }
}

#[test]
fn classify_reports_kind_and_gap() {
    let s = spectrum(&[-2.0, 1.0, 1.001]);
    let (mut kind, mut gap) = (FlatlabRegime::Generic, 0usize);
    unsafe {
        assert_eq!(flatlab_classify(s, &mut kind, &mut gap), FlatlabStatus::Ok);
        flatlab_spectrum_free(s);
    }
    assert_eq!(kind, FlatlabRegime::OneGap);
    assert_eq!(gap, 1);
}

#[test]
fn errors_carry_status_and_message() {
    let mut h = ptr::null_mut();
    let v = [1.0, f64::NAN];
    assert_eq!(unsafe { flatlab_spectrum_new(v.as_ptr(), 2, &mut h) }, FlatlabStatus::InvalidInput);
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { flatlab_spectrum_new(ptr::null(), 2, &mut h) }, FlatlabStatus::NullPointer);
    assert!(last_error().contains("null"));

    let mut out = 0.0;
    assert_eq!(unsafe { flatlab_l_n(ptr::null(), &mut out) }, FlatlabStatus::NullPointer);

    let s = spectrum(&[-1.0, 0.0, 1.0, 2.0, 3.0]);
    let mut q = FlatlabQuadValue { value: 0.0, error: 0.0, converged: 0 };
    assert_eq!(unsafe { flatlab_recursive_i(s, 1.0, &mut q) }, FlatlabStatus::InvalidInput);

    let mut buf = [0.0; 4];
    assert_eq!(unsafe { flatlab_spectrum_values(s, buf.as_mut_ptr(), 4) }, FlatlabStatus::BufferTooSmall);
    unsafe { flatlab_spectrum_free(s) };

    let mut sampler = ptr::null_mut();
    assert_eq!(unsafe { flatlab_sampler_new(1, 1, &mut sampler) }, FlatlabStatus::InvalidInput);
}

#[test]
fn haar_rotation_is_orthogonal_and_reproducible() {
    let mut sampler = ptr::null_mut();
    assert_eq!(unsafe { flatlab_sampler_new(42, 3, &mut sampler) }, FlatlabStatus::Ok);
    let (mut a, mut b) = ([0.0; 9], [0.0; 9]);
    unsafe {
        assert_eq!(flatlab_haar_rotation(sampler, 7, a.as_mut_ptr(), 9), FlatlabStatus::Ok);
        assert_eq!(flatlab_haar_rotation(sampler, 7, b.as_mut_ptr(), 9), FlatlabStatus::Ok);
        assert_eq!(flatlab_haar_rotation(sampler, 7, b.as_mut_ptr(), 8), FlatlabStatus::BufferTooSmall);
        flatlab_sampler_free(sampler);
    }
    assert_eq!(a, b);
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| a[3 * i + k] * a[3 * j + k]).sum();
            assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
    let det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6]);
    assert!((det - 1.0).abs() < 1e-12);
}

#[test]
fn estimate_and_recursion_agree_for_n2() {
    let a = 10.0f64;
    let exact = std::f64::consts::FRAC_2_PI * (1.0 / (a * std::f64::consts::SQRT_2)).asin();
    let s = spectrum(&[-a, a]);
    let mut sampler = ptr::null_mut();
    let mut e = FlatlabEstimate { p_hat: 0.0, ci_low: 0.0, ci_high: 0.0, hits: 0, total: 0, reduction: FlatlabReduction::None };
    let mut q = FlatlabQuadValue { value: 0.0, error: 0.0, converged: 0 };
    unsafe {
        assert_eq!(flatlab_sampler_new(3, 2, &mut sampler), FlatlabStatus::Ok);
        assert_eq!(flatlab_estimate_i(s, 1.0, 200_000, sampler, &mut e), FlatlabStatus::Ok);
        assert_eq!(flatlab_recursive_i(s, 1.0, &mut q), FlatlabStatus::Ok);
        flatlab_sampler_free(sampler);
        flatlab_spectrum_free(s);
    }
    assert_eq!(e.total, 200_000);
    assert_eq!(e.reduction, FlatlabReduction::None);
    let se = (exact * (1.0 - exact) / e.total as f64).sqrt();
    assert!((e.p_hat - exact).abs() < 5.0 * se, "{e:?} vs {exact}");
    assert!(e.ci_low < e.p_hat && e.p_hat < e.ci_high);
    assert!((q.value - exact).abs() < 1e-14 && q.converged == 1);
}

#[test]
fn trace_cutoff_is_reported() {
    let s = spectrum(&[2.0, 2.0, 2.0]);
    let mut sampler = ptr::null_mut();
    let mut e = FlatlabEstimate { p_hat: 1.0, ci_low: 0.0, ci_high: 0.0, hits: 0, total: 0, reduction: FlatlabReduction::None };
    unsafe {
        assert_eq!(flatlab_sampler_new(3, 3, &mut sampler), FlatlabStatus::Ok);
        assert_eq!(flatlab_estimate_i(s, 1.0, 1000, sampler, &mut e), FlatlabStatus::Ok);
        flatlab_sampler_free(sampler);
        flatlab_spectrum_free(s);
    }
    assert_eq!(e.p_hat, 0.0);
    assert_eq!(e.reduction, FlatlabReduction::TraceCutoff);
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/flatlab.h")).unwrap();
    for name in [
        "flatlab_spectrum_new",
        "flatlab_spectrum_free",
        "flatlab_l_n",
        "flatlab_a_n",
        "flatlab_tilde_beta",
        "flatlab_classify",
        "flatlab_estimate_i",
        "flatlab_recursive_i",
        "flatlab_haar_rotation",
        "flatlab_last_error",
        "typedef struct FlatlabSpectrum FlatlabSpectrum",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
