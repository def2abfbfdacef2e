//! C ABI over `roa-core`.
//!
//! Every function returns a [`RoaStatus`]; on failure the message is kept
//! per thread and read with [`roa_last_error_message`]. Handles are opaque
//! and owned by the caller until passed to the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use roa_core::bench;
use roa_core::cli::RunConfig;
use roa_core::verify::{check_certificate, CheckSettings, StateBox};
use roa_core::vsiter::{run_multiround, Certificate, VsError};
use roa_core::DynamicalSystem;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Infeasible = 5,
    Parse = 6,
    BufferTooSmall = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// A polynomial vector field with an equilibrium at the origin.
pub struct RoaSystem(DynamicalSystem);

/// A certified sublevel set with its multipliers.
pub struct RoaCertificate(Certificate);

/// The certificates of a multi-round run, one per round.
pub struct RoaEstimate(Vec<Certificate>);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: RoaStatus, msg: impl std::fmt::Display) -> RoaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string());
    status
}

fn guard(f: impl FnOnce() -> RoaStatus) -> RoaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == RoaStatus::Ok {
                LAST_ERROR.with(|e| e.borrow_mut().clear());
            }
            s
        }
        Err(_) => fail(RoaStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, RoaStatus> {
    if p.is_null() {
        return Err(fail(RoaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RoaStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], RoaStatus> {
    if p.is_null() {
        return Err(fail(RoaStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, RoaStatus> {
    p.as_ref().ok_or_else(|| fail(RoaStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> RoaStatus {
    *out = Box::into_raw(Box::new(value));
    RoaStatus::Ok
}

/// Copies `s` plus a NUL into `buf`; `needed` always receives the full size.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> RoaStatus {
    if !needed.is_null() {
        *needed = s.len() + 1;
    }
    if buf.is_null() || len < s.len() + 1 {
        return RoaStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    RoaStatus::Ok
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

fn vs_status(e: &VsError) -> RoaStatus {
    match e {
        VsError::InfeasibleAtZero
        | VsError::ShapeInfeasible { .. }
        | VsError::NoCertificate
        | VsError::Lyapunov(_) => RoaStatus::Infeasible,
        VsError::Config(_) => RoaStatus::Config,
        _ => RoaStatus::InvalidArgument,
    }
}

/// Copies the calling thread's last error message into `buf`.
///
/// # Safety
/// `buf` must hold `len` bytes or be null; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn roa_last_error_message(buf: *mut c_char, len: usize, needed: *mut usize) -> RoaStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    write_str(&msg, buf, len, needed)
}

/// Loads a shipped benchmark system: "vdp", "ex2", "ex3" or "ex4".
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_system_preset(name: *const c_char, out: *mut *mut RoaSystem) -> RoaStatus {
    guard(|| {
        if out.is_null() {
            return fail(RoaStatus::NullPointer, "out is null");
        }
        let name = tri!(str_arg(name, "name"));
        match bench::get(name) {
            Ok(p) => put(out, RoaSystem(p.system)),
            Err(e) => fail(RoaStatus::InvalidArgument, e),
        }
    })
}

/// Builds a system from `nvars` right-hand sides in polynomial text.
///
/// # Safety
/// `rhs` must point to `nvars` NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn roa_system_parse(
    name: *const c_char,
    rhs: *const *const c_char,
    nvars: usize,
    out: *mut *mut RoaSystem,
) -> RoaStatus {
    guard(|| {
        if out.is_null() || rhs.is_null() {
            return fail(RoaStatus::NullPointer, "rhs or out is null");
        }
        let name = tri!(str_arg(name, "name"));
        let mut lines = Vec::with_capacity(nvars);
        for k in 0..nvars {
            lines.push(tri!(str_arg(*rhs.add(k), "rhs entry")));
        }
        match DynamicalSystem::parse(name, &lines) {
            Ok(s) => put(out, RoaSystem(s)),
            Err(e) => fail(RoaStatus::Parse, e),
        }
    })
}

/// # Safety
/// `sys` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn roa_system_nvars(sys: *const RoaSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.0.nvars())
}

/// Evaluates the vector field at `x` (length `nvars`) into `out` (length `nvars`).
///
/// # Safety
/// `x` and `out` must hold `nvars` doubles.
#[no_mangle]
pub unsafe extern "C" fn roa_system_eval(sys: *const RoaSystem, x: *const f64, nvars: usize, out: *mut f64) -> RoaStatus {
    guard(|| {
        let sys = tri!(ref_arg(sys, "sys"));
        if nvars != sys.0.nvars() {
            return fail(RoaStatus::InvalidArgument, format!("expected {} states", sys.0.nvars()));
        }
        let x = tri!(slice_arg(x, nvars, "x"));
        if out.is_null() {
            return fail(RoaStatus::NullPointer, "out is null");
        }
        let f = sys.0.eval(x);
        ptr::copy_nonoverlapping(f.as_ptr(), out, nvars);
        RoaStatus::Ok
    })
}

/// # Safety
/// `sys` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn roa_system_free(sys: *mut RoaSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Runs every round of a TOML run config (the `roa estimate` format).
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_estimate(config_toml: *const c_char, out: *mut *mut RoaEstimate) -> RoaStatus {
    guard(|| {
        if out.is_null() {
            return fail(RoaStatus::NullPointer, "out is null");
        }
        let text = tri!(str_arg(config_toml, "config_toml"));
        let run = match RunConfig::from_toml(text).and_then(|c| c.resolve()) {
            Ok(r) => r,
            Err(e) => return fail(RoaStatus::Config, e),
        };
        match run_multiround(&run.system, &run.rounds, &run.config) {
            Ok(rs) => put(out, RoaEstimate(rs.into_iter().map(|r| r.certificate).collect())),
            Err(e) => fail(vs_status(&e), e),
        }
    })
}

/// # Safety
/// `est` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn roa_estimate_round_count(est: *const RoaEstimate) -> usize {
    est.as_ref().map_or(0, |e| e.0.len())
}

/// Copies round `index` (0-based) into a new certificate handle.
///
/// # Safety
/// `est` must be a handle from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_estimate_certificate(
    est: *const RoaEstimate,
    index: usize,
    out: *mut *mut RoaCertificate,
) -> RoaStatus {
    guard(|| {
        let est = tri!(ref_arg(est, "est"));
        if out.is_null() {
            return fail(RoaStatus::NullPointer, "out is null");
        }
        match est.0.get(index) {
            Some(c) => put(out, RoaCertificate(c.clone())),
            None => fail(RoaStatus::OutOfRange, format!("{} rounds", est.0.len())),
        }
    })
}

/// # Safety
/// `est` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn roa_estimate_free(est: *mut RoaEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Parses the certificate text format.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn roa_certificate_parse(text: *const c_char, out: *mut *mut RoaCertificate) -> RoaStatus {
    guard(|| {
        if out.is_null() {
            return fail(RoaStatus::NullPointer, "out is null");
        }
        let text = tri!(str_arg(text, "text"));
        match Certificate::from_text(text) {
            Ok(c) => put(out, RoaCertificate(c)),
            Err(e) => fail(RoaStatus::Parse, e),
        }
    })
}

/// Writes the certificate text format into `buf`; call with a null `buf`
/// to learn the size through `needed`.
///
/// # Safety
/// `buf` must hold `len` bytes or be null; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn roa_certificate_to_text(
    cert: *const RoaCertificate,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> RoaStatus {
    guard(|| {
        let cert = tri!(ref_arg(cert, "cert"));
        let text = cert.0.to_text();
        match write_str(&text, buf, len, needed) {
            RoaStatus::Ok => RoaStatus::Ok,
            s => fail(s, format!("need {} bytes", text.len() + 1)),
        }
    })
}

/// # Safety
/// `cert` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn roa_certificate_nvars(cert: *const RoaCertificate) -> usize {
    cert.as_ref().map_or(0, |c| c.0.nvars())
}

/// Certified level `gamma`, NaN for a null handle.
///
/// # Safety
/// `cert` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn roa_certificate_gamma(cert: *const RoaCertificate) -> f64 {
    cert.as_ref().map_or(f64::NAN, |c| c.0.gamma)
}

/// `V(x)`.
///
/// # Safety
/// `x` must hold `nvars` doubles and `value` be valid.
#[no_mangle]
pub unsafe extern "C" fn roa_certificate_eval(
    cert: *const RoaCertificate,
    x: *const f64,
    nvars: usize,
    value: *mut f64,
) -> RoaStatus {
    guard(|| {
        let cert = tri!(ref_arg(cert, "cert"));
        if nvars != cert.0.nvars() {
            return fail(RoaStatus::InvalidArgument, format!("expected {} states", cert.0.nvars()));
        }
        let x = tri!(slice_arg(x, nvars, "x"));
        if value.is_null() {
            return fail(RoaStatus::NullPointer, "value is null");
        }
        *value = cert.0.v.eval(x);
        RoaStatus::Ok
    })
}

/// Sets `*inside` to 1 when `V(x) <= gamma`, else 0.
///
/// # Safety
/// `x` must hold `nvars` doubles and `inside` be valid.
#[no_mangle]
pub unsafe extern "C" fn roa_certificate_contains(
    cert: *const RoaCertificate,
    x: *const f64,
    nvars: usize,
    inside: *mut i32,
) -> RoaStatus {
    guard(|| {
        let cert = tri!(ref_arg(cert, "cert"));
        if nvars != cert.0.nvars() {
            return fail(RoaStatus::InvalidArgument, format!("expected {} states", cert.0.nvars()));
        }
        let x = tri!(slice_arg(x, nvars, "x"));
        if inside.is_null() {
            return fail(RoaStatus::NullPointer, "inside is null");
        }
        *inside = i32::from(cert.0.contains(x));
        RoaStatus::Ok
    })
}

/// Re-solves every SOS condition of the certificate; `*passed` is 1 when all hold.
///
/// # Safety
/// `cert` must be a handle from this library and `passed` valid.
#[no_mangle]
pub unsafe extern "C" fn roa_certificate_replay(cert: *const RoaCertificate, passed: *mut i32) -> RoaStatus {
    guard(|| {
        let cert = tri!(ref_arg(cert, "cert"));
        if passed.is_null() {
            return fail(RoaStatus::NullPointer, "passed is null");
        }
        match cert.0.replay(&Default::default()) {
            Ok(r) => {
                *passed = i32::from(r.passed());
                RoaStatus::Ok
            }
            Err(e) => fail(vs_status(&e), e),
        }
    })
}

/// Samples the certified set inside the box `[lo, hi]` and simulates each
/// sample; `*violations` receives the number of failed samples.
///
/// # Safety
/// `lo` and `hi` must hold `nvars` doubles and `violations` be valid.
#[no_mangle]
pub unsafe extern "C" fn roa_certificate_verify(
    cert: *const RoaCertificate,
    lo: *const f64,
    hi: *const f64,
    nvars: usize,
    samples: usize,
    seed: u64,
    violations: *mut usize,
) -> RoaStatus {
    guard(|| {
        let cert = tri!(ref_arg(cert, "cert"));
        if nvars != cert.0.nvars() {
            return fail(RoaStatus::InvalidArgument, format!("expected {} states", cert.0.nvars()));
        }
        if samples == 0 {
            return fail(RoaStatus::InvalidArgument, "samples must be positive");
        }
        let (lo, hi) = (tri!(slice_arg(lo, nvars, "lo")), tri!(slice_arg(hi, nvars, "hi")));
        if violations.is_null() {
            return fail(RoaStatus::NullPointer, "violations is null");
        }
        let bounds = match StateBox::new(lo.to_vec(), hi.to_vec()) {
            Ok(b) => b,
            Err(e) => return fail(RoaStatus::InvalidArgument, e),
        };
        let settings = CheckSettings {
            samples,
            seed,
            ..CheckSettings::default()
        };
        match check_certificate(&cert.0, &bounds, &settings) {
            Ok(r) => {
                *violations = r.violations.len();
                RoaStatus::Ok
            }
            Err(e) => fail(RoaStatus::InvalidArgument, e),
        }
    })
}

/// # Safety
/// `cert` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn roa_certificate_free(cert: *mut RoaCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}
