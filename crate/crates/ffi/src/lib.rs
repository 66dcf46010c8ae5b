//! C ABI over the transmission solver.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns a `PhStatus`; on failure
//! `ph_last_error_message` describes the error for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use perheat::cli::{CliError, LoadedConfig};
use perheat::geometry::{locate, Region};
use perheat::kernel::{periodic_kernel, LatticeSumConfig, PeriodicityCell};
use perheat::transmission::{contrast, Side, TransmissionData, TransmissionSolution, TransmissionSystem};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    OutOfRange = 4,
    Panic = 5,
}

pub const PH_METHOD_FULL: c_int = 0;
pub const PH_METHOD_REDUCED: c_int = 1;
pub const PH_SIDE_PLUS: c_int = 0;
pub const PH_SIDE_MINUS: c_int = 1;

/// Assembled operators and boundary data of one configured problem.
pub struct PhProblem {
    system: TransmissionSystem,
    data: TransmissionData,
}

/// Densities ρ⁺ and ρ⁻ of one solve.
pub struct PhSolution {
    solution: TransmissionSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("no interior nul"));
}

fn fail(status: PhStatus, message: impl Into<String>) -> PhStatus {
    set_error(message);
    status
}

fn from_core(e: perheat::Error) -> PhStatus {
    let status = match e {
        perheat::Error::TruncationFailed { .. }
        | perheat::Error::SingularBlock { .. }
        | perheat::Error::ExtrapolationFailed { .. } => PhStatus::Numerical,
        _ => PhStatus::InvalidInput,
    };
    fail(status, e.to_string())
}

fn from_cli(e: CliError) -> PhStatus {
    let status = match e {
        CliError::Numerical { .. } => PhStatus::Numerical,
        _ => PhStatus::InvalidInput,
    };
    fail(status, e.to_json().to_string())
}

fn guard(f: impl FnOnce() -> PhStatus) -> PhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == PhStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(PhStatus::Panic, "internal panic"),
    }
}

/// Message of the last failed call on this thread; valid until the next call.
#[no_mangle]
pub extern "C" fn ph_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ph_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a problem from a JSON experiment config (same schema as the CLI).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ph_problem_from_json(json: *const c_char, out: *mut *mut PhProblem) -> PhStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(PhStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(_) => return fail(PhStatus::InvalidInput, "config is not valid UTF-8"),
        };
        let loaded = match LoadedConfig::from_str(text, PathBuf::new()) {
            Ok(l) => l,
            Err(e) => return from_cli(e),
        };
        let cfg = &loaded.config;
        let setup = match cfg.setup() {
            Ok(s) => s,
            Err(e) => return from_cli(e),
        };
        let system = match setup.system(cfg.n, cfg.m) {
            Ok(s) => s,
            Err(e) => return from_core(e),
        };
        let grid = |spec: &perheat::cli::config::DensitySpec, field: &str| {
            spec.grid(field, &system.tg, &system.grid.s, &loaded.base_dir)
        };
        let (f, g) = match (grid(&cfg.f_spec, "f_spec"), grid(&cfg.g_spec, "g_spec")) {
            (Ok(f), Ok(g)) => (f, g),
            (Err(e), _) | (_, Err(e)) => return from_cli(e),
        };
        let data = TransmissionData {
            lambda_plus: cfg.lambda_plus,
            lambda_minus: cfg.lambda_minus,
            f,
            g,
        };
        *out = Box::into_raw(Box::new(PhProblem { system, data }));
        PhStatus::Ok
    })
}

/// # Safety
/// `problem` must come from `ph_problem_from_json` or be null.
#[no_mangle]
pub unsafe extern "C" fn ph_problem_free(problem: *mut PhProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Slab and node counts of the problem grid.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ph_problem_dims(problem: *const PhProblem, steps: *mut usize, nodes: *mut usize) -> PhStatus {
    guard(|| {
        if problem.is_null() || steps.is_null() || nodes.is_null() {
            return fail(PhStatus::NullPointer, "null argument");
        }
        let p = &*problem;
        *steps = p.system.tg.steps;
        *nodes = p.system.grid.len();
        PhStatus::Ok
    })
}

/// Solve with `PH_METHOD_FULL` or `PH_METHOD_REDUCED`.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ph_solve(problem: *const PhProblem, method: c_int, out: *mut *mut PhSolution) -> PhStatus {
    guard(|| {
        if problem.is_null() || out.is_null() {
            return fail(PhStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let p = &*problem;
        let solution = match method {
            PH_METHOD_FULL => p.system.solve_full(&p.data),
            PH_METHOD_REDUCED => p.system.solve_reduced(&p.data),
            _ => return fail(PhStatus::OutOfRange, format!("unknown method {method}")),
        };
        match solution {
            Ok(solution) => {
                *out = Box::into_raw(Box::new(PhSolution { solution }));
                PhStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `solution` must come from `ph_solve` or be null.
#[no_mangle]
pub unsafe extern "C" fn ph_solution_free(solution: *mut PhSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Copy ρ⁺ or ρ⁻ into `out` in slab-major order (index k·N + i); `len` must equal M·N.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ph_solution_density(
    solution: *const PhSolution,
    side: c_int,
    out: *mut f64,
    len: usize,
) -> PhStatus {
    guard(|| {
        if solution.is_null() || out.is_null() {
            return fail(PhStatus::NullPointer, "null argument");
        }
        let s = &(*solution).solution;
        let rho = match side {
            PH_SIDE_PLUS => &s.rho_plus,
            PH_SIDE_MINUS => &s.rho_minus,
            _ => return fail(PhStatus::OutOfRange, format!("unknown side {side}")),
        };
        if len != rho.values().len() {
            return fail(
                PhStatus::OutOfRange,
                format!("buffer holds {len} values, density has {}", rho.values().len()),
            );
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(rho.values());
        PhStatus::Ok
    })
}

/// Evaluate u⁺ (interior targets) or u⁻ (exterior targets) at `count` (t, x, y) triples.
///
/// # Safety
/// `targets` must hold 3·`count` doubles and `out` `count` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ph_solution_eval(
    problem: *const PhProblem,
    solution: *const PhSolution,
    targets: *const f64,
    count: usize,
    out: *mut f64,
) -> PhStatus {
    guard(|| {
        if problem.is_null() || solution.is_null() || (count > 0 && (targets.is_null() || out.is_null())) {
            return fail(PhStatus::NullPointer, "null argument");
        }
        if count == 0 {
            return PhStatus::Ok;
        }
        let p = &*problem;
        let s = &(*solution).solution;
        let pts = std::slice::from_raw_parts(targets, 3 * count);
        let out = std::slice::from_raw_parts_mut(out, count);
        for (index, (tri, o)) in pts.chunks_exact(3).zip(out.iter_mut()).enumerate() {
            let x = [tri[1], tri[2]];
            let side = match locate(&x, &p.system.grid, &p.system.cell) {
                Region::Interior => Side::Plus,
                Region::Exterior => Side::Minus,
                Region::NearBoundary => {
                    return fail(PhStatus::InvalidInput, format!("target {index} is too close to the boundary"))
                }
            };
            match p.system.eval_solution(s, side, &[(tri[0], x)]) {
                Ok(v) => *o = v[0],
                Err(e) => return from_core(e),
            }
        }
        PhStatus::Ok
    })
}

/// Periodic heat kernel at (t, x) for the diagonal cell with sides `q`; `dim` is 2 or 3.
///
/// # Safety
/// `x` and `q` must hold `dim` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ph_periodic_kernel(t: f64, x: *const f64, q: *const f64, dim: usize, out: *mut f64) -> PhStatus {
    guard(|| {
        if x.is_null() || q.is_null() || out.is_null() {
            return fail(PhStatus::NullPointer, "null argument");
        }
        let cell = match PeriodicityCell::new(std::slice::from_raw_parts(q, dim)) {
            Ok(c) => c,
            Err(e) => return from_core(e),
        };
        match periodic_kernel(t, std::slice::from_raw_parts(x, dim), &cell, &LatticeSumConfig::default()) {
            Ok(v) => {
                *out = v;
                PhStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// λ_c = (λ⁻ − λ⁺)/(λ⁻ + λ⁺).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ph_contrast(lambda_plus: f64, lambda_minus: f64, out: *mut f64) -> PhStatus {
    guard(|| {
        if out.is_null() {
            return fail(PhStatus::NullPointer, "null argument");
        }
        match contrast(lambda_plus, lambda_minus) {
            Ok(v) => {
                *out = v;
                PhStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}
