//! C ABI over the scaling rules and the privacy accountant.
//!
//! Conventions:
//! - every function returns a [`DpscaleStatus`]; outputs go through pointers;
//! - rules are opaque handles created by the `dpscale_rule_new_*` family and
//!   released with `dpscale_rule_free`;
//! - no function stores state between calls, and handles are safe to share
//!   across threads for read-only use.

use std::ffi::c_char;
use std::slice;

use dpscale::privacy::{account_epsilon, calibrate_sigma_for_budget, calibrate_sigma_single};
use dpscale::scaling::{max_weight, scale, weight, ScalingRule};
use dpscale::vector::GradVector;
use dpscale::Error;

/// Result codes for every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpscaleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Closed forms require s * r < 1.
    ClosedFormInvalid = 3,
    /// No noise multiplier reaches the requested budget.
    UnattainableBudget = 4,
    NonFinite = 5,
    InternalError = 6,
}

fn status_of(err: &Error) -> DpscaleStatus {
    match err {
        Error::InvalidArgument(_) | Error::EmptyInput(_) | Error::DimensionMismatch { .. } => {
            DpscaleStatus::InvalidArgument
        }
        Error::ClosedFormInvalid { .. } => DpscaleStatus::ClosedFormInvalid,
        Error::UnattainableBudget(_) => DpscaleStatus::UnattainableBudget,
        Error::NonFinite { .. } => DpscaleStatus::NonFinite,
        _ => DpscaleStatus::InternalError,
    }
}

/// Static name for a status code, for log messages. Never null.
#[no_mangle]
pub extern "C" fn dpscale_status_name(status: DpscaleStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        DpscaleStatus::Ok => b"ok\0",
        DpscaleStatus::NullPointer => b"null pointer\0",
        DpscaleStatus::InvalidArgument => b"invalid argument\0",
        DpscaleStatus::ClosedFormInvalid => b"closed form requires s * r < 1\0",
        DpscaleStatus::UnattainableBudget => b"privacy budget unattainable\0",
        DpscaleStatus::NonFinite => b"non-finite value\0",
        DpscaleStatus::InternalError => b"internal error\0",
    };
    name.as_ptr() as *const c_char
}

/// Opaque scaling-rule handle.
pub struct DpscaleRule {
    inner: ScalingRule,
}

fn rule_out(
    result: Result<ScalingRule, Error>,
    out: *mut *mut DpscaleRule,
) -> DpscaleStatus {
    if out.is_null() {
        return DpscaleStatus::NullPointer;
    }
    match result {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(DpscaleRule { inner })) };
            DpscaleStatus::Ok
        }
        Err(e) => {
            unsafe { *out = std::ptr::null_mut() };
            status_of(&e)
        }
    }
}

/// Hard clipping: weight = min(1, c / norm).
#[no_mangle]
pub extern "C" fn dpscale_rule_new_vanilla_clip(
    c: f64,
    r: f64,
    out: *mut *mut DpscaleRule,
) -> DpscaleStatus {
    rule_out(ScalingRule::vanilla_clip(c, r), out)
}

/// Normalized scaling: weight = 1 / (norm + r).
#[no_mangle]
pub extern "C" fn dpscale_rule_new_auto_s(
    c: f64,
    r: f64,
    out: *mut *mut DpscaleRule,
) -> DpscaleStatus {
    rule_out(ScalingRule::auto_s(c, r), out)
}

/// Non-monotonous scaling: weight = c / (norm + r / (norm + r)).
#[no_mangle]
pub extern "C" fn dpscale_rule_new_psac(
    c: f64,
    r: f64,
    out: *mut *mut DpscaleRule,
) -> DpscaleStatus {
    rule_out(ScalingRule::psac(c, r), out)
}

/// Coefficient-scaled variant: weight = c / (s * norm + r / (norm + r)).
#[no_mangle]
pub extern "C" fn dpscale_rule_new_psasc(
    c: f64,
    r: f64,
    s: f64,
    out: *mut *mut DpscaleRule,
) -> DpscaleStatus {
    rule_out(ScalingRule::psasc(c, r, s), out)
}

/// Releases a rule handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn dpscale_rule_free(rule: *mut DpscaleRule) {
    if !rule.is_null() {
        drop(unsafe { Box::from_raw(rule) });
    }
}

/// Scalar weight applied to a gradient of the given norm.
#[no_mangle]
pub extern "C" fn dpscale_rule_weight(
    rule: *const DpscaleRule,
    norm: f64,
    out: *mut f64,
) -> DpscaleStatus {
    if rule.is_null() || out.is_null() {
        return DpscaleStatus::NullPointer;
    }
    match weight(unsafe { &(*rule).inner }, norm) {
        Ok(w) => {
            unsafe { *out = w };
            DpscaleStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Worst-case scaled-gradient norm (the rule's l2-sensitivity).
#[no_mangle]
pub extern "C" fn dpscale_rule_sensitivity(
    rule: *const DpscaleRule,
    out: *mut f64,
) -> DpscaleStatus {
    if rule.is_null() || out.is_null() {
        return DpscaleStatus::NullPointer;
    }
    unsafe { *out = (*rule).inner.sensitivity() };
    DpscaleStatus::Ok
}

/// Scales `gradient` (length `len`) into `out` (same length; may alias the
/// input).
#[no_mangle]
pub extern "C" fn dpscale_rule_scale(
    rule: *const DpscaleRule,
    gradient: *const f64,
    len: usize,
    out: *mut f64,
) -> DpscaleStatus {
    if rule.is_null() || gradient.is_null() || out.is_null() {
        return DpscaleStatus::NullPointer;
    }
    if len == 0 {
        return DpscaleStatus::InvalidArgument;
    }
    let input = unsafe { slice::from_raw_parts(gradient, len) };
    let g = GradVector::new(input.to_vec());
    match scale(unsafe { &(*rule).inner }, &g) {
        Ok(scaled) => {
            let output = unsafe { slice::from_raw_parts_mut(out, len) };
            output.copy_from_slice(scaled.values());
            DpscaleStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Location and value of the rule's weight maximum (requires s * r < 1).
#[no_mangle]
pub extern "C" fn dpscale_rule_max_weight(
    rule: *const DpscaleRule,
    norm_at_max: *mut f64,
    max_value: *mut f64,
) -> DpscaleStatus {
    if rule.is_null() || norm_at_max.is_null() || max_value.is_null() {
        return DpscaleStatus::NullPointer;
    }
    match max_weight(unsafe { &(*rule).inner }) {
        Ok((n, w)) => {
            unsafe {
                *norm_at_max = n;
                *max_value = w;
            }
            DpscaleStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Single-release Gaussian-mechanism noise scale for (epsilon, delta).
#[no_mangle]
pub extern "C" fn dpscale_calibrate_sigma_single(
    epsilon: f64,
    delta: f64,
    sensitivity: f64,
    out: *mut f64,
) -> DpscaleStatus {
    if out.is_null() {
        return DpscaleStatus::NullPointer;
    }
    match calibrate_sigma_single(epsilon, delta, sensitivity) {
        Ok(sigma) => {
            unsafe { *out = sigma };
            DpscaleStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Accountant epsilon after `steps` subsampled Gaussian releases. Vacuous
/// bounds come back as positive infinity with `Ok`.
#[no_mangle]
pub extern "C" fn dpscale_account_epsilon(
    sigma: f64,
    sampling_rate: f64,
    steps: usize,
    delta: f64,
    out: *mut f64,
) -> DpscaleStatus {
    if out.is_null() {
        return DpscaleStatus::NullPointer;
    }
    match account_epsilon(sigma, sampling_rate, steps, delta) {
        Ok(eps) => {
            unsafe { *out = eps };
            DpscaleStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Smallest noise multiplier whose accountant epsilon fits the budget.
#[no_mangle]
pub extern "C" fn dpscale_calibrate_sigma_for_budget(
    epsilon: f64,
    delta: f64,
    sampling_rate: f64,
    steps: usize,
    out: *mut f64,
) -> DpscaleStatus {
    if out.is_null() {
        return DpscaleStatus::NullPointer;
    }
    match calibrate_sigma_for_budget(epsilon, delta, sampling_rate, steps) {
        Ok(sigma) => {
            unsafe { *out = sigma };
            DpscaleStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}
