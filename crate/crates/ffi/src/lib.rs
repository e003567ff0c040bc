//! C ABI over `galactic-orbits`.
//!
//! Every entry point returns a [`GalorbStatus`]; results go through out
//! pointers. On failure the message is kept per thread and can be copied out
//! with [`galorb_last_error_message`]. Panics are caught at the boundary and
//! reported as [`GalorbStatus::Panic`].
//!
//! States are `double[4]` in the order `x, y, p_x, p_y`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};

use galactic_orbits::averaging::quadrature::QuadratureSpec;
use galactic_orbits::averaging::{AveragingConfig, Chart, ModelFamily};
use galactic_orbits::closedform::{averaged_f_closed, family_period, gap_matrix, predicted_zeros};
use galactic_orbits::model::{energy, vector_field};
use galactic_orbits::verify::{self, unperturbed_seed, ShootingConfig};
use galactic_orbits::{Branch, EnergyLevel, Error, ModelParams, PhaseState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GalorbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    Domain = 3,
    Hypothesis = 4,
    Resonance = 5,
    Numeric = 6,
    NonConvergence = 7,
    Panic = 99,
}

pub const GALORB_BRANCH_X: c_int = 0;
pub const GALORB_BRANCH_Y: c_int = 1;

fn branch_of(b: c_int) -> Result<Branch, Failure> {
    match b {
        GALORB_BRANCH_X => Ok(Branch::X),
        GALORB_BRANCH_Y => Ok(Branch::Y),
        other => Err(Failure::Core(Error::InvalidParams(format!("unknown branch code {other}")))),
    }
}

/// Opaque parameter set `(a, b, c, q)`.
pub struct GalorbParams {
    inner: ModelParams,
}

/// A converged periodic orbit.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GalorbOrbit {
    pub ic: [f64; 4],
    pub period: f64,
    pub energy_error: f64,
    pub residual: f64,
    pub iterations: u32,
    /// Floquet multipliers, ascending modulus.
    pub multipliers_re: [f64; 4],
    pub multipliers_im: [f64; 4],
    pub trivial_defect: f64,
    pub reciprocal_defect: f64,
    pub symplectic_defect: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> GalorbStatus {
    match err {
        Error::InvalidParams(_) => GalorbStatus::InvalidParams,
        Error::Domain(_)
        | Error::OutsideEnergyShell { .. }
        | Error::ChartBoundary { .. }
        | Error::InconsistentAnchor { .. }
        | Error::OracleDomain(_) => GalorbStatus::Domain,
        Error::HypothesisViolated { .. } => GalorbStatus::Hypothesis,
        Error::Resonance(_) | Error::ResonanceRequired { .. } => GalorbStatus::Resonance,
        Error::NonConvergence { .. } => GalorbStatus::NonConvergence,
        _ => GalorbStatus::Numeric,
    }
}

enum Failure {
    Null,
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `body`, records any failure and converts it to a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> GalorbStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GalorbStatus::Ok,
        Ok(Err(Failure::Null)) => {
            set_error("null pointer argument".into());
            GalorbStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GalorbStatus::Panic
        }
    }
}

unsafe fn params_ref<'a>(p: *const GalorbParams) -> Result<&'a ModelParams, Failure> {
    p.as_ref().map(|p| &p.inner).ok_or(Failure::Null)
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null)
}

unsafe fn read_state(s: *const f64) -> Result<PhaseState, Failure> {
    if s.is_null() {
        return Err(Failure::Null);
    }
    Ok(PhaseState::from_slice(std::slice::from_raw_parts(s, 4)))
}

/// Creates a parameter handle. Free it with [`galorb_params_free`].
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn galorb_params_new(
    a: f64,
    b: f64,
    c: f64,
    q: f64,
    out: *mut *mut GalorbParams,
) -> GalorbStatus {
    guard(|| {
        let slot = out_ref(out)?;
        let inner = ModelParams::new(a, b, c, q)?;
        *slot = Box::into_raw(Box::new(GalorbParams { inner }));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`galorb_params_new`] and not have been freed. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn galorb_params_free(p: *mut GalorbParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live handle, `state` must point to 4 doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn galorb_energy(
    p: *const GalorbParams,
    eps: f64,
    state: *const f64,
    out: *mut f64,
) -> GalorbStatus {
    guard(|| {
        let params = params_ref(p)?;
        let s = read_state(state)?;
        *out_ref(out)? = energy(params, eps, &s);
        Ok(())
    })
}

/// Writes the Hamiltonian vector field at `state` into `out[0..4]`.
///
/// # Safety
/// `p` must be a live handle; `state` and `out` must each point to 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn galorb_vector_field(
    p: *const GalorbParams,
    eps: f64,
    state: *const f64,
    out: *mut f64,
) -> GalorbStatus {
    guard(|| {
        let params = params_ref(p)?;
        let s = read_state(state)?;
        if out.is_null() {
            return Err(Failure::Null);
        }
        let f = vector_field(params, eps, &s);
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(f.as_slice());
        Ok(())
    })
}

/// Closed-form zeros `-r, +r` of the averaged function on level `h`.
///
/// # Safety
/// `p` must be a live handle; `minus` and `plus` must be writable.
#[no_mangle]
pub unsafe extern "C" fn galorb_predicted_zeros(
    p: *const GalorbParams,
    branch: c_int,
    h: f64,
    minus: *mut f64,
    plus: *mut f64,
) -> GalorbStatus {
    guard(|| {
        let params = params_ref(p)?;
        let z = predicted_zeros(branch_of(branch)?, EnergyLevel::new(h)?, params);
        *out_ref(minus)? = z.minus;
        *out_ref(plus)? = z.plus;
        Ok(())
    })
}

/// Averaged function at amplitude `alpha` by finite-part quadrature.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn galorb_averaged_function(
    p: *const GalorbParams,
    branch: c_int,
    h: f64,
    alpha: f64,
    out: *mut f64,
) -> GalorbStatus {
    guard(|| {
        let params = params_ref(p)?;
        let slot = out_ref(out)?;
        let family = ModelFamily::new(branch_of(branch)?, EnergyLevel::new(h)?, params, Chart::Amplitude)?;
        *slot = family.averaged(alpha, &QuadratureSpec::default())?;
        Ok(())
    })
}

/// Closed form of the averaged function at amplitude `alpha`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn galorb_averaged_closed(
    p: *const GalorbParams,
    branch: c_int,
    h: f64,
    alpha: f64,
    out: *mut f64,
) -> GalorbStatus {
    guard(|| {
        let params = params_ref(p)?;
        *out_ref(out)? = averaged_f_closed(branch_of(branch)?, alpha, EnergyLevel::new(h)?, params)?;
        Ok(())
    })
}

/// `det Delta` of the branch's gap matrix.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn galorb_gap_determinant(p: *const GalorbParams, branch: c_int, out: *mut f64) -> GalorbStatus {
    guard(|| {
        let params = params_ref(p)?;
        *out_ref(out)? = gap_matrix(branch_of(branch)?, params).det_delta;
        Ok(())
    })
}

/// Period of the axial orbit on level `h` from the one-degree-of-freedom
/// quadrature.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn galorb_axial_period(
    p: *const GalorbParams,
    branch: c_int,
    h: f64,
    eps: f64,
    out: *mut f64,
) -> GalorbStatus {
    guard(|| {
        let params = params_ref(p)?;
        *out_ref(out)? = verify::axial_period(branch_of(branch)?, EnergyLevel::new(h)?, params, eps)?;
        Ok(())
    })
}

fn fill_orbit(o: &verify::PeriodicOrbitResult) -> GalorbOrbit {
    let mut out = GalorbOrbit {
        ic: o.ic.to_array(),
        period: o.period,
        energy_error: o.energy_error,
        residual: o.residual,
        iterations: o.iterations as u32,
        trivial_defect: o.floquet.trivial_defect,
        reciprocal_defect: o.floquet.reciprocal_defect,
        symplectic_defect: o.symplectic_defect,
        ..GalorbOrbit::default()
    };
    for (i, m) in o.multipliers().iter().take(4).enumerate() {
        out.multipliers_re[i] = m.re;
        out.multipliers_im[i] = m.im;
    }
    out
}

/// Shoots a periodic orbit of the full system on level `h` from `guess`
/// (4 doubles) and `guess_period`. A null `guess` starts from the
/// unperturbed axial orbit of `branch`.
///
/// # Safety
/// `p` must be a live handle, `guess` null or 4 doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn galorb_shoot_periodic(
    p: *const GalorbParams,
    branch: c_int,
    h: f64,
    eps: f64,
    guess: *const f64,
    guess_period: f64,
    out: *mut GalorbOrbit,
) -> GalorbStatus {
    guard(|| {
        let params = params_ref(p)?;
        let slot = out_ref(out)?;
        let level = EnergyLevel::new(h)?;
        let b = branch_of(branch)?;
        let (seed, period) = if guess.is_null() {
            (unperturbed_seed(b, level, params.q), family_period(b, params.q))
        } else {
            (read_state(guess)?, guess_period)
        };
        let orbit = verify::shoot_periodic(params, eps, b, &seed, period, level, &ShootingConfig::default())?;
        *slot = fill_orbit(&orbit);
        Ok(())
    })
}

/// Runs the whole pipeline on level `h`. Writes the number of distinct
/// converged orbits to `count` and, if `orbits` is non-null, up to
/// `capacity` of them. `inconclusive` receives a bit mask of branches whose
/// averaged function vanishes identically (bit 0 x, bit 1 y).
///
/// # Safety
/// `p` must be a live handle; `count` and `inconclusive` writable; `orbits`
/// null or valid for `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn galorb_count_orbits(
    p: *const GalorbParams,
    h: f64,
    eps: f64,
    orbits: *mut GalorbOrbit,
    capacity: usize,
    count: *mut usize,
    inconclusive: *mut u32,
) -> GalorbStatus {
    guard(|| {
        let params = params_ref(p)?;
        let count = out_ref(count)?;
        let inconclusive = out_ref(inconclusive)?;
        let result = verify::count_orbits_per_level(
            params,
            EnergyLevel::new(h)?,
            eps,
            &AveragingConfig::default(),
            &ShootingConfig::default(),
        )?;
        *count = result.count();
        *inconclusive = result.inconclusive.iter().map(|b| if *b == Branch::X { 1 } else { 2 }).sum();
        if !orbits.is_null() {
            let dst = std::slice::from_raw_parts_mut(orbits, capacity);
            for (slot, o) in dst.iter_mut().zip(&result.orbits) {
                *slot = fill_orbit(o);
            }
        }
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL terminated and
/// truncated to `len` bytes. Returns the full message length without the
/// terminator, so a call with `len == 0` sizes the buffer.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn galorb_last_error_message(buf: *mut c_char, len: usize) -> c_int {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len() as c_int
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn galorb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
