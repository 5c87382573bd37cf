use std::ffi::{CStr, CString};
use std::ptr;

use duality_ffi::*;

const BIN1: &str = include_str!("../../core/scenarios/bin1.json");
const ARB1: &str = include_str!("../../core/scenarios/arb1.json");
const DORMANT: &str = include_str!("../../core/scenarios/dormant_leaf.json");
const U1: f64 = 0.058_891_517_828_191_13;

fn load(json: &str) -> *mut DualityModel {
    let text = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { duality_model_from_json(text.as_ptr(), &mut m) }, DualityStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> Option<String> {
    let p = duality_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

#[test]
fn bin1_round_trip() {
    let m = load(BIN1);
    unsafe {
        let mut n = 0usize;
        assert_eq!(duality_model_node_count(m, &mut n), DualityStatus::Ok);
        assert_eq!(n, 3);

        let (mut holds, mut eps) = (false, 0.0);
        assert_eq!(duality_check_nupbr(m, &mut holds, &mut eps), DualityStatus::Ok);
        assert!(holds);
        assert!((eps - 2.0 / 3.0).abs() < 1e-9);

        let mut u = 0.0;
        let mut c = [0.0; 3];
        assert_eq!(duality_solve_primal(m, 2.0, 1e-10, &mut u, c.as_mut_ptr(), 3), DualityStatus::Ok);
        assert!((u - (2f64.ln() + U1)).abs() < 1e-8);
        assert!((c[1] - 3.0).abs() < 1e-6 && (c[2] - 1.5).abs() < 1e-6);

        let mut v = 0.0;
        let mut y = [0.0; 3];
        assert_eq!(duality_solve_dual(m, 1.0, 1e-10, &mut v, y.as_mut_ptr(), 3), DualityStatus::Ok);
        assert!((v - (U1 - 1.0)).abs() < 1e-8);
        assert!(y[0].is_nan());
        assert!((y[1] - 2.0 / 3.0).abs() < 1e-6 && (y[2] - 4.0 / 3.0).abs() < 1e-6);
        assert_eq!(last_error(), None);
        duality_model_free(m);
    }
}

#[test]
fn outputs_may_be_null() {
    let m = load(DORMANT);
    unsafe {
        assert_eq!(duality_check_nupbr(m, ptr::null_mut(), ptr::null_mut()), DualityStatus::Ok);
        let mut u = 0.0;
        assert_eq!(duality_solve_primal(m, 1.0, 1e-10, &mut u, ptr::null_mut(), 0), DualityStatus::Ok);
        assert!((u - 0.0).abs() < 1e-8);
        duality_model_free(m);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut m = ptr::null_mut();
        let bad = CString::new("{\"assets\": 1").unwrap();
        assert_eq!(duality_model_from_json(bad.as_ptr(), &mut m), DualityStatus::Parse);
        assert!(m.is_null());
        assert!(last_error().unwrap().contains("JSON"));

        let neg = CString::new(BIN1.replacen("\"prob\": 0.5", "\"prob\": 0.4", 1)).unwrap();
        assert_eq!(duality_model_from_json(neg.as_ptr(), &mut m), DualityStatus::Validation);

        assert_eq!(duality_model_from_json(ptr::null(), &mut m), DualityStatus::NullPointer);
        assert_eq!(duality_model_node_count(ptr::null(), &mut 0), DualityStatus::NullPointer);
        assert!(last_error().unwrap().contains("model"));

        let arb = load(ARB1);
        let mut holds = true;
        assert_eq!(duality_check_nupbr(arb, &mut holds, ptr::null_mut()), DualityStatus::Ok);
        assert!(!holds);
        assert_eq!(
            duality_solve_primal(arb, 1.0, 1e-8, ptr::null_mut(), ptr::null_mut(), 0),
            DualityStatus::NoDeflator
        );
        duality_model_free(arb);

        let m = load(BIN1);
        let mut c = [0.0; 2];
        assert_eq!(
            duality_solve_primal(m, 1.0, 1e-8, ptr::null_mut(), c.as_mut_ptr(), 2),
            DualityStatus::BufferTooSmall
        );
        assert_eq!(
            duality_solve_primal(m, -1.0, 1e-8, ptr::null_mut(), ptr::null_mut(), 0),
            DualityStatus::InvalidArgument
        );
        assert_eq!(
            duality_solve_dual(m, 1.0, 0.0, ptr::null_mut(), ptr::null_mut(), 0),
            DualityStatus::InvalidArgument
        );
        duality_model_free(m);
        duality_model_free(ptr::null_mut());
    }
}

#[test]
fn bessel_matches_core() {
    let (mut e, mut s) = (0.0, 0.0);
    assert_eq!(unsafe { duality_bessel_defect(1.0, 100_000, 7, &mut e, &mut s) }, DualityStatus::Ok);
    let core = duality_core::bessel::estimate_defect(1.0, 100_000, 7).unwrap();
    assert_eq!((e, s), (core.estimate, core.std_error));
    assert_eq!(unsafe { duality_bessel_defect(-1.0, 100_000, 7, &mut e, &mut s) }, DualityStatus::InvalidArgument);
}
