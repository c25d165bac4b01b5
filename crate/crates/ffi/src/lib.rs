//! C ABI over the tqnav alignment filter.
//!
//! A filter is an opaque `TqnavFilter *` created by [`tqnav_filter_new`] and
//! released with [`tqnav_filter_free`]. Every call returns a [`TqnavStatus`];
//! the message for the most recent failure on the calling thread is available
//! through [`tqnav_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use tqnav::earth::{c_en, ecef_to_lla};
use tqnav::ekf::{FilterConfig, FilterState, UpdateOutcome};
use tqnav::errmodel::{N, PSI};
use tqnav::harness::{euler_from_c_bn, replay_initial_state, Config};
use tqnav::meas::Measurement;
use tqnav::mech::ImuSample;
use tqnav::triquat::Vec3;
use tqnav::Error;

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TqnavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    Config = 4,
    Fault = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
    Utf8 = 9,
}

/// Outcome of a measurement update.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TqnavUpdate {
    Applied = 0,
    Gated = 1,
}

/// Opaque filter handle.
pub struct TqnavFilter {
    state: FilterState,
    config: Config,
    filter: FilterConfig,
    t_prev: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> TqnavStatus {
    match e {
        Error::InvalidInput(_) => TqnavStatus::InvalidInput,
        Error::Domain(_) => TqnavStatus::Domain,
        Error::Config(_) => TqnavStatus::Config,
        Error::Fault(_) => TqnavStatus::Fault,
        Error::Parse { .. } => TqnavStatus::Parse,
        Error::Io(_) => TqnavStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TqnavStatus, String)>) -> TqnavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TqnavStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside tqnav".into());
            TqnavStatus::Panic
        }
    }
}

fn lib(e: Error) -> (TqnavStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TqnavStatus, String) {
    (TqnavStatus::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a>(h: *mut TqnavFilter) -> Result<&'a mut TqnavFilter, (TqnavStatus, String)> {
    h.as_mut().ok_or_else(|| null("filter handle"))
}

unsafe fn vec3(p: *const f64, what: &str) -> Result<Vec3, (TqnavStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Vec3::new(s[0], s[1], s[2]))
}

/// Creates a filter from a TOML configuration (NULL for defaults).
///
/// The filter kind, start position, attitude and odometer scale come from the
/// `[replay]` section. `t0` is the time of the initial state, s.
///
/// # Safety
/// `config_toml` must be NULL or a NUL-terminated string; `out` must be valid
/// for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn tqnav_filter_new(config_toml: *const c_char, t0: f64, out: *mut *mut TqnavFilter) -> TqnavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let config = if config_toml.is_null() {
            Config::default()
        } else {
            let text = CStr::from_ptr(config_toml).to_str().map_err(|e| (TqnavStatus::Utf8, e.to_string()))?;
            Config::from_toml(text).map_err(lib)?
        };
        config.validate().map_err(lib)?;
        if !t0.is_finite() {
            return Err((TqnavStatus::InvalidInput, "t0 must be finite".into()));
        }
        let state = replay_initial_state(&config, config.replay.filter, t0).map_err(lib)?;
        let filter = config.filter_config();
        *out = Box::into_raw(Box::new(TqnavFilter { state, config, filter, t_prev: t0 }));
        Ok(())
    })
}

/// Releases a filter. NULL is ignored.
///
/// # Safety
/// `h` must be NULL or a handle from [`tqnav_filter_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tqnav_filter_free(h: *mut TqnavFilter) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Propagates with one raw IMU sample taken at `t` (after the previous one).
/// `gyro` is rad/s and `accel` m/s², both body frame, 3 doubles each.
///
/// # Safety
/// `h` must be a live handle; `gyro` and `accel` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn tqnav_filter_propagate(
    h: *mut TqnavFilter,
    t: f64,
    gyro: *const f64,
    accel: *const f64,
) -> TqnavStatus {
    guard(|| {
        let f = handle(h)?;
        let imu = ImuSample::new(t, vec3(gyro, "gyro")?, vec3(accel, "accel")?);
        f.state.propagate(&imu, t - f.t_prev, &f.filter).map_err(lib)?;
        f.t_prev = t;
        Ok(())
    })
}

unsafe fn apply(h: *mut TqnavFilter, m: impl FnOnce(&TqnavFilter) -> Measurement, out: *mut TqnavUpdate) -> TqnavStatus {
    guard(|| {
        let f = handle(h)?;
        let m = m(f);
        let r = f.state.update(&m, &f.filter).map_err(lib)?;
        if !out.is_null() {
            *out = match r {
                UpdateOutcome::Applied => TqnavUpdate::Applied,
                UpdateOutcome::Gated => TqnavUpdate::Gated,
            };
        }
        Ok(())
    })
}

/// Zero-velocity update at the current estimate. `outcome` may be NULL.
///
/// # Safety
/// `h` must be a live handle; `outcome` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn tqnav_filter_update_zero_velocity(h: *mut TqnavFilter, outcome: *mut TqnavUpdate) -> TqnavStatus {
    apply(h, |f| Measurement::zero_velocity(f.t_prev, Vec3::zeros(), f.filter.zero_velocity_sigma), outcome)
}

/// Odometer update with a pulse rate in pulses/s. `outcome` may be NULL.
///
/// # Safety
/// `h` must be a live handle; `outcome` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn tqnav_filter_update_odometer(
    h: *mut TqnavFilter,
    pulse_rate: f64,
    outcome: *mut TqnavUpdate,
) -> TqnavStatus {
    apply(h, |f| Measurement::odometer(f.t_prev, pulse_rate, &f.filter.odometer_sigma_vec()), outcome)
}

/// Roll, pitch, yaw of the body in the local navigation frame, deg.
///
/// # Safety
/// `h` must be a live handle; `rpy_deg` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tqnav_filter_attitude(h: *mut TqnavFilter, rpy_deg: *mut f64) -> TqnavStatus {
    guard(|| {
        let f = handle(h)?;
        if rpy_deg.is_null() {
            return Err(null("rpy_deg"));
        }
        let nav = &f.state.nav;
        let cne = c_en(&ecef_to_lla(&nav.r_e, &f.config.earth));
        let rpy = euler_from_c_bn(&(cne.transpose() * nav.c_be()));
        std::slice::from_raw_parts_mut(rpy_deg, 3).copy_from_slice(&rpy);
        Ok(())
    })
}

/// Odometer parameters: K (p/m), ψ and θ (deg), lever arm x, y, z (m).
///
/// # Safety
/// `h` must be a live handle; `out` must point to 6 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tqnav_filter_params(h: *mut TqnavFilter, out: *mut f64) -> TqnavStatus {
    guard(|| {
        let f = handle(h)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = &f.state.params;
        let v = [p.k, p.psi / DEG, p.theta / DEG, p.lever.x, p.lever.y, p.lever.z];
        std::slice::from_raw_parts_mut(out, 6).copy_from_slice(&v);
        Ok(())
    })
}

/// Number of error states.
#[no_mangle]
pub extern "C" fn tqnav_state_dim() -> usize {
    N
}

/// Index of the first odometer-parameter error state.
#[no_mangle]
pub extern "C" fn tqnav_param_offset() -> usize {
    PSI
}

/// 1σ of every error state in the filter's own coordinates.
///
/// # Safety
/// `h` must be a live handle; `out` must point to `tqnav_state_dim()` doubles.
#[no_mangle]
pub unsafe extern "C" fn tqnav_filter_sigmas(h: *mut TqnavFilter, out: *mut f64) -> TqnavStatus {
    guard(|| {
        let f = handle(h)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, N).copy_from_slice(f.state.sigmas().as_slice());
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf`, NUL-terminated
/// and truncated to `len`. Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tqnav_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
