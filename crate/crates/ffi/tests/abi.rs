use std::ffi::{CStr, CString};
use std::ptr;

use expressivity_ffi::*;

const SKIP: &str = include_str!("../../core/data/skip_layers.json");
const TENT: &str = include_str!("../../core/data/tent_tent.json");

fn load(json: &str) -> *mut ExprNetwork {
    let c = CString::new(json).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { expr_network_from_json(c.as_ptr(), &mut h) }, ExprStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let p = expr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn skip_layers_depth_and_omega() {
    let h = load(SKIP);
    let (mut d, mut num, mut den, mut n) = (0usize, 0u64, 0u64, 0usize);
    unsafe {
        assert_eq!(expr_network_depth(h, &mut d), ExprStatus::Ok);
        assert_eq!(expr_network_omega(h, &mut num, &mut den), ExprStatus::Ok);
        assert_eq!(expr_network_n_inputs(h, &mut n), ExprStatus::Ok);
        expr_network_free(h);
    }
    assert_eq!((d, num, den, n), (3, 8, 3, 3));
    assert!(expr_last_error_message().is_null());
}

#[test]
fn tent_breakpoints_and_forward() {
    let h = load(TENT);
    let (x, y) = ([0.0], [1.0]);
    let mut b = 0usize;
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(expr_network_breakpoints(h, x.as_ptr(), y.as_ptr(), 1, &mut b), ExprStatus::Ok);
        assert_eq!(expr_network_forward(h, [0.25].as_ptr(), 1, &mut v), ExprStatus::Ok);
        expr_network_free(h);
    }
    assert_eq!(b, 3);
    assert!((v - 1.0).abs() < 1e-12);
}

#[test]
fn bounds() {
    let (mut v, mut of) = (0.0, 9u8);
    unsafe {
        assert_eq!(expr_breakpoint_upper_bound(2, 8, 3, 3, &mut v, &mut of), ExprStatus::Ok);
    }
    assert_eq!(of, 0);
    assert!((v - 1304.0 / 27.0).abs() < 1e-9);
    unsafe {
        assert_eq!(expr_breakpoint_upper_bound(2, 1000, 1, 200, &mut v, &mut of), ExprStatus::Ok);
    }
    assert_eq!(of, 1);
    assert!(v.is_infinite());

    let mut g = 0.0;
    unsafe {
        assert_eq!(expr_theorem3_bound(0.25, 1.0, 5, 1, 2, 2f64.powi(-32), &mut g), ExprStatus::Ok);
    }
    let want = 2f64.powi(-32) / 0.25 * ((1.0 + 0.25 * 5.0f64).powi(2) - 1.0);
    assert!((g - want).abs() <= 1e-12 * want);

    let name = CString::new("poly_a").unwrap();
    let (mut m, mut lb) = (0.0, 0.0);
    unsafe {
        assert_eq!(expr_theorem2_bound(name.as_ptr(), 0, 1e-4, 2, 129, &mut m, &mut lb), ExprStatus::Ok);
    }
    assert!((m - 0.82).abs() < 0.01, "{m}");
    assert!(lb > 0.0);
    unsafe {
        assert_eq!(expr_theorem2_bound(name.as_ptr(), 0, 1e-4, 1, 129, &mut m, &mut lb), ExprStatus::Ok);
    }
    assert!(lb.is_nan());
}

#[test]
fn error_codes() {
    let mut h = ptr::null_mut();
    let bad = CString::new("{ nope").unwrap();
    unsafe {
        assert_eq!(expr_network_from_json(bad.as_ptr(), &mut h), ExprStatus::Parse);
    }
    assert!(h.is_null());
    assert!(last_error().contains("line 1"));

    unsafe {
        assert_eq!(expr_network_from_json(ptr::null(), &mut h), ExprStatus::NullPointer);
    }
    assert!(last_error().contains("json"));

    let invalid = [0xffu8, 0xfe, 0];
    unsafe {
        assert_eq!(
            expr_network_from_json(invalid.as_ptr().cast(), &mut h),
            ExprStatus::InvalidUtf8
        );
    }

    let mut d = 0usize;
    unsafe {
        assert_eq!(expr_network_depth(ptr::null(), &mut d), ExprStatus::NullPointer);
    }

    let net = load(TENT);
    let mut v = 0.0;
    unsafe {
        assert_eq!(expr_network_forward(net, [0.1, 0.2].as_ptr(), 2, &mut v), ExprStatus::InvalidArgument);
        assert_eq!(expr_network_depth(net, ptr::null_mut()), ExprStatus::NullPointer);
        expr_network_free(net);
        expr_network_free(ptr::null_mut());
    }

    let (mut of, mut b) = (0u8, 0.0);
    unsafe {
        assert_eq!(expr_breakpoint_upper_bound(2, 1, 0, 1, &mut b, &mut of), ExprStatus::InvalidArgument);
        assert_eq!(expr_theorem3_bound(-1.0, 1.0, 1, 1, 1, 0.1, &mut b), ExprStatus::InvalidArgument);
    }
    let unknown = CString::new("nope").unwrap();
    let (mut m, mut lb) = (0.0, 0.0);
    unsafe {
        assert_ne!(expr_theorem2_bound(unknown.as_ptr(), 0, 1e-4, 2, 9, &mut m, &mut lb), ExprStatus::Ok);
    }
}

#[test]
fn sigmoid_breakpoints_unsupported() {
    let h = load(include_str!("../../core/data/sigmoid_small.json"));
    let mut b = 0usize;
    let (x, y) = ([0.0, 0.0], [1.0, 1.0]);
    unsafe {
        assert_eq!(expr_network_breakpoints(h, x.as_ptr(), y.as_ptr(), 2, &mut b), ExprStatus::Unsupported);
        expr_network_free(h);
    }
}
