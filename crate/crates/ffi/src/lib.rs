//! C ABI over `roc-core`.
//!
//! Energies are opaque `RocEnergy` handles released with
//! `roc_energy_free`. Every fallible call returns a `RocStatus`; on failure
//! `roc_last_error_message` describes the error for the calling thread.
//! Matrices are passed row-major as `n*n` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use roc_core::config::ConfigFile;
use roc_core::criteria::{reduced_ks_point, Tolerances};
use roc_core::energymodel::{zoo, EnergySpec, Regularity, ZooParams};
use roc_core::smallmat::{svd_ordered, Matrix, OrderedSingularTuple};
use roc_core::verdict::{check_config, to_json};
use roc_core::RocError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Domain = 4,
    Evaluation = 5,
    NotApplicable = 6,
    Parse = 7,
    Io = 8,
    Panic = 9,
}

/// Opaque energy handle.
pub struct RocEnergy {
    spec: EnergySpec,
}

/// Number of margins written by `roc_reduced_ks_point`.
pub const ROC_REDUCED_MARGINS: usize = 5;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(s) => s,
    Err(_) => panic!("version string"),
};

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &RocError) -> RocStatus {
    match e {
        RocError::Input(_) | RocError::Sampling(_) | RocError::Json(_) => RocStatus::InvalidInput,
        RocError::Domain(_) => RocStatus::Domain,
        RocError::Evaluation(_) | RocError::Eval(_) => RocStatus::Evaluation,
        RocError::NotApplicable(_) => RocStatus::NotApplicable,
        RocError::Parse(_) => RocStatus::Parse,
        RocError::Io(_) => RocStatus::Io,
    }
}

struct Fail(RocStatus, String);

impl From<RocError> for Fail {
    fn from(e: RocError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> RocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RocStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RocStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(RocStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RocStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn energy_arg<'a>(e: *const RocEnergy) -> Result<&'a EnergySpec, Fail> {
    e.as_ref().map(|h| &h.spec).ok_or_else(|| null("energy"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn give_energy(spec: EnergySpec, out: *mut *mut RocEnergy) {
    *out = Box::into_raw(Box::new(RocEnergy { spec }));
}

/// Built-in energy by name. `n = 0` selects the default dimension.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roc_energy_from_zoo(name: *const c_char, n: usize, out: *mut *mut RocEnergy) -> RocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(name, "name")?;
        let params = ZooParams {
            n: (n > 0).then_some(n),
            ..Default::default()
        };
        give_energy(zoo(name, &params)?, out);
        Ok(())
    })
}

/// Energy from a ĝ expression in `l1..ln`. `regularity` is 0 for
/// c1-closure, 1 for c2-closure.
///
/// # Safety
/// `expr` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roc_energy_from_ghat(
    expr: *const c_char,
    n: usize,
    regularity: c_int,
    out: *mut *mut RocEnergy,
) -> RocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let expr = str_arg(expr, "expr")?;
        let reg = match regularity {
            0 => Regularity::C2InteriorC1Closure,
            1 => Regularity::C2Closure,
            r => return Err(Fail(RocStatus::InvalidInput, format!("unknown regularity {r}"))),
        };
        give_energy(EnergySpec::from_ghat_expr(expr, n, reg)?, out);
        Ok(())
    })
}

/// # Safety
/// `energy` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn roc_energy_free(energy: *mut RocEnergy) {
    if !energy.is_null() {
        drop(Box::from_raw(energy));
    }
}

/// Dimension of the energy, 0 for a NULL handle.
///
/// # Safety
/// `energy` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn roc_energy_dim(energy: *const RocEnergy) -> usize {
    energy.as_ref().map_or(0, |h| h.spec.dim())
}

/// W(F) for a row-major `n*n` matrix.
///
/// # Safety
/// `f` must point to `n*n` doubles, `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn roc_energy_eval(
    energy: *const RocEnergy,
    f: *const f64,
    n: usize,
    out: *mut f64,
) -> RocStatus {
    guard(|| {
        let spec = energy_arg(energy)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = Matrix::from_row_slice(n, slice_arg(f, n * n, "f")?)?;
        *out = spec.eval_w(&m)?;
        Ok(())
    })
}

/// ĝ at a weakly decreasing tuple of `n` positive values.
///
/// # Safety
/// `s` must point to `n` doubles, `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn roc_energy_ghat(
    energy: *const RocEnergy,
    s: *const f64,
    n: usize,
    out: *mut f64,
) -> RocStatus {
    guard(|| {
        let spec = energy_arg(energy)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let t = OrderedSingularTuple::new(slice_arg(s, n, "s")?.to_vec())?;
        *out = spec.ghat(t.values())?;
        Ok(())
    })
}

/// Ordered SVD `F = U diag(s) Vᵀ`. `u` and `v` may be NULL; otherwise they
/// receive row-major `n*n` factors.
///
/// # Safety
/// `f` must point to `n*n` doubles, `s` to `n` writable doubles, `u` and
/// `v` to `n*n` writable doubles when not NULL.
#[no_mangle]
pub unsafe extern "C" fn roc_svd_ordered(
    f: *const f64,
    n: usize,
    s: *mut f64,
    u: *mut f64,
    v: *mut f64,
) -> RocStatus {
    guard(|| {
        if s.is_null() {
            return Err(null("s"));
        }
        let m = Matrix::from_row_slice(n, slice_arg(f, n * n, "f")?)?;
        let svd = svd_ordered(&m)?;
        ptr::copy_nonoverlapping(svd.s.as_ptr(), s, n);
        if !u.is_null() {
            ptr::copy_nonoverlapping(svd.u.as_slice().as_ptr(), u, n * n);
        }
        if !v.is_null() {
            ptr::copy_nonoverlapping(svd.v.as_slice().as_ptr(), v, n * n);
        }
        Ok(())
    })
}

/// Reduced planar criterion at `l1 > l2` with default tolerances.
/// `margins` receives RED-i.1, RED-i.2, RED-ii, RED-iii, RED-iv; `passed`
/// (may be NULL) is set to 1 when all hold.
///
/// # Safety
/// `margins` must point to `ROC_REDUCED_MARGINS` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn roc_reduced_ks_point(
    energy: *const RocEnergy,
    l1: f64,
    l2: f64,
    margins: *mut f64,
    passed: *mut c_int,
) -> RocStatus {
    guard(|| {
        let spec = energy_arg(energy)?;
        if margins.is_null() {
            return Err(null("margins"));
        }
        let ms = reduced_ks_point(spec, l1, l2, &Tolerances::default())?;
        if ms.len() != ROC_REDUCED_MARGINS {
            return Err(Fail(RocStatus::Evaluation, format!("expected 5 margins, got {}", ms.len())));
        }
        for (i, m) in ms.iter().enumerate() {
            *margins.add(i) = m.value;
        }
        if !passed.is_null() {
            *passed = ms.iter().all(|m| m.passed) as c_int;
        }
        Ok(())
    })
}

/// Full check driven by a TOML configuration (the CLI `--config` format).
/// `report` receives a JSON string to release with `roc_string_free`;
/// `verdict` (may be NULL) receives 0 passed, 1 refuted, 2 inconclusive.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roc_check(config_toml: *const c_char, report: *mut *mut c_char, verdict: *mut c_int) -> RocStatus {
    guard(|| {
        if report.is_null() {
            return Err(null("report"));
        }
        let text = str_arg(config_toml, "config_toml")?;
        let cfg = ConfigFile::from_toml_str(text)?.resolve()?;
        let r = check_config(&cfg)?;
        let json = CString::new(to_json(&r)?).map_err(|e| Fail(RocStatus::Evaluation, e.to_string()))?;
        if !verdict.is_null() {
            *verdict = r.verdict.exit_code();
        }
        *report = json.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn roc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Last error on the calling thread, or NULL. Valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn roc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn roc_version() -> *const c_char {
    VERSION.as_ptr()
}
