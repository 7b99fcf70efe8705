//! C interface to the expressivity auditor.
//!
//! Networks are opaque handles created from JSON and released with
//! [`expr_network_free`]. Every fallible call returns an [`ExprStatus`];
//! on failure the message is kept per thread and read back with
//! [`expr_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use expressivity::bounds::{breakpoint_upper_bound, theorem2_bound, theorem3_bound};
use expressivity::restriction::restrict;
use expressivity::targets::catalog;
use expressivity::{ActivationGap, Error, Network, Segment};
use num::rational::Ratio;

/// Opaque network handle.
pub struct ExprNetwork {
    net: Network,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExprStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidArgument = 4,
    /// Operation needs piecewise-linear activations or a precondition failed.
    Unsupported = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> ExprStatus {
    match err {
        Error::Parse(_) | Error::Json(_) | Error::InvalidNetwork(_) => ExprStatus::Parse,
        Error::UnsupportedActivation { .. } | Error::Precondition(_) => ExprStatus::Unsupported,
        _ => ExprStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), ExprStatus>) -> ExprStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExprStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            ExprStatus::Panic
        }
    }
}

fn fail(err: Error) -> ExprStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

fn null(what: &str) -> ExprStatus {
    set_error(format!("null pointer: {what}"));
    ExprStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, ExprStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| {
        set_error(format!("{what} is not UTF-8: {e}"));
        ExprStatus::InvalidUtf8
    })
}

unsafe fn net_arg<'a>(p: *const ExprNetwork) -> Result<&'a Network, ExprStatus> {
    p.as_ref().map(|h| &h.net).ok_or_else(|| null("network"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], ExprStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), ExprStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Last error message on this thread, or null if the previous call succeeded.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn expr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and validates a network from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn expr_network_from_json(json: *const c_char, out: *mut *mut ExprNetwork) -> ExprStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(ptr::null_mut());
        let s = str_arg(json, "json")?;
        let net = Network::from_json(s).map_err(fail)?;
        out.write(Box::into_raw(Box::new(ExprNetwork { net })));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `net` must come from [`expr_network_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn expr_network_free(net: *mut ExprNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn expr_network_n_inputs(net: *const ExprNetwork, out: *mut usize) -> ExprStatus {
    guard(|| {
        let n = net_arg(net)?;
        write(out, n.n_inputs(), "out")
    })
}

/// Depth of the network (longest input-to-unit path).
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn expr_network_depth(net: *const ExprNetwork, out: *mut usize) -> ExprStatus {
    guard(|| {
        let p = net_arg(net)?.depth_profile().map_err(fail)?;
        write(out, p.depth, "out")
    })
}

/// Average width as an exact fraction.
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn expr_network_omega(net: *const ExprNetwork, numer: *mut u64, denom: *mut u64) -> ExprStatus {
    guard(|| {
        let p = net_arg(net)?.depth_profile().map_err(fail)?;
        write(numer, *p.omega.numer(), "numer")?;
        write(denom, *p.omega.denom(), "denom")
    })
}

/// Evaluates the network at `x` (length `n`).
///
/// # Safety
/// `x` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn expr_network_forward(
    net: *const ExprNetwork,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> ExprStatus {
    guard(|| {
        let net = net_arg(net)?;
        let x = slice_arg(x, n, "x")?;
        let pass = net.forward(x).map_err(fail)?;
        write(out, pass.output, "out")
    })
}

/// Break points of the output restricted to the segment from `x` to `y`.
///
/// # Safety
/// `x` and `y` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn expr_network_breakpoints(
    net: *const ExprNetwork,
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut usize,
) -> ExprStatus {
    guard(|| {
        let net = net_arg(net)?;
        let seg = Segment::new(slice_arg(x, n, "x")?.to_vec(), slice_arg(y, n, "y")?.to_vec()).map_err(fail)?;
        let r = restrict(net, &seg).map_err(fail)?;
        write(out, r.break_points(), "out")
    })
}

/// Break-point upper bound for `t` pieces, average width `omega_num/omega_den`
/// and depth `d`. `overflow` is set to 1 when the value does not fit a double
/// (the value is then +inf).
///
/// # Safety
/// `out` and `overflow` must be writable.
#[no_mangle]
pub unsafe extern "C" fn expr_breakpoint_upper_bound(
    t: usize,
    omega_num: u64,
    omega_den: u64,
    d: usize,
    out: *mut f64,
    overflow: *mut u8,
) -> ExprStatus {
    guard(|| {
        if omega_den == 0 {
            return Err(fail(Error::Argument("omega denominator is zero".into())));
        }
        let b = breakpoint_upper_bound(t, Ratio::new(omega_num, omega_den), d).map_err(fail)?;
        write(out, b.value, "out")?;
        write(overflow, b.overflow as u8, "overflow")
    })
}

/// Grid-search multiplier and hidden-unit lower bound for a catalog target.
/// `n` of zero selects the target's default dimension. The unit bound is NaN
/// when `t < 2`.
///
/// # Safety
/// `target` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn expr_theorem2_bound(
    target: *const c_char,
    n: usize,
    epsilon: f64,
    t: usize,
    grid: usize,
    multiplier: *mut f64,
    hidden_units_lb: *mut f64,
) -> ExprStatus {
    guard(|| {
        let name = str_arg(target, "target")?;
        let g = catalog(name, (n > 0).then_some(n)).map_err(fail)?;
        let r = theorem2_bound(&g, epsilon, t, grid).map_err(fail)?;
        write(multiplier, r.multiplier, "multiplier")?;
        write(hidden_units_lb, r.hidden_units_lb.unwrap_or(f64::NAN), "hidden_units_lb")
    })
}

/// Output error bound after an activation swap with sup gap `gap`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn expr_theorem3_bound(
    delta: f64,
    a: f64,
    omega_num: u64,
    omega_den: u64,
    d: usize,
    gap: f64,
    out: *mut f64,
) -> ExprStatus {
    guard(|| {
        if omega_den == 0 {
            return Err(fail(Error::Argument("omega denominator is zero".into())));
        }
        let v = theorem3_bound(delta, a, Ratio::new(omega_num, omega_den), d, ActivationGap { value: gap })
            .map_err(fail)?;
        write(out, v, "out")
    })
}
