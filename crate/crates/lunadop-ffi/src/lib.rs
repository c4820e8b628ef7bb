//! C ABI for the lunadop toolkit.
//!
//! The surface mirrors the file-level workflow: load a broadcast ephemeris
//! JSON plus an observation CSV into an opaque input handle, solve, and read
//! the solution back through getters. Handles are created and destroyed by
//! this library only; every function returns an [`LndStatus`] and leaves a
//! description of the last failure in a thread-local buffer readable through
//! [`lnd_last_error`]. All functions catch panics at the boundary.
//!
//! The C header is generated by cbindgen at build time into
//! `include/lunadop.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use lunadop::error::Error;
use lunadop::formats;
use lunadop::montecarlo::{build_trial_geometry, trial_rng};
use lunadop::scenario::ScenarioConfig;
use lunadop::solver::{disambiguate_multipass, solve_single_pass, PassData, SolverEstimate};

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LndStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Utf8 = 3,
    Io = 4,
    Parse = 5,
    Solver = 6,
    Panicked = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> LndStatus {
    match err {
        Error::InvalidArgument(_)
        | Error::LatitudeOutOfRange(_)
        | Error::Config(_)
        | Error::EmptyInput(_) => LndStatus::InvalidArgument,
        Error::Parse { .. } | Error::Json(_) => LndStatus::Parse,
        Error::Io(_) => LndStatus::Io,
        _ => LndStatus::Solver,
    }
}

fn fail(err: Error) -> LndStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn guarded<F: FnOnce() -> LndStatus>(body: F) -> LndStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic crossed the FFI boundary");
            LndStatus::Panicked
        }
    }
}

unsafe fn cstr_to_path(ptr: *const c_char) -> Result<PathBuf, LndStatus> {
    if ptr.is_null() {
        set_error("null path argument");
        return Err(LndStatus::NullArgument);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(e) => {
            set_error(&format!("path is not valid UTF-8: {e}"));
            Err(LndStatus::Utf8)
        }
    }
}

/// Solver input: per-pass ephemerides and observations. Opaque.
pub struct LndSolverInput {
    passes: Vec<PassData>,
}

/// Solver output. Opaque.
pub struct LndSolution {
    estimate: SolverEstimate,
    n_passes: usize,
    ambiguous: Option<bool>,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lnd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message into `buf` (NUL-terminated, truncated to
/// `cap`). Returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn lnd_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Load solver input from a broadcast ephemeris JSON and an observation CSV.
/// On success writes a heap handle to `out`; release it with
/// [`lnd_input_free`].
///
/// # Safety
/// `ephemeris_path` and `observations_path` must be NUL-terminated strings;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lnd_input_load(
    ephemeris_path: *const c_char,
    observations_path: *const c_char,
    out: *mut *mut LndSolverInput,
) -> LndStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output handle");
            return LndStatus::NullArgument;
        }
        let eph_path = match unsafe { cstr_to_path(ephemeris_path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let obs_path = match unsafe { cstr_to_path(observations_path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let load = || -> lunadop::Result<Vec<PassData>> {
            let eph = formats::read_ephemeris_json(&eph_path)?;
            let obs = formats::read_observations_csv(&obs_path)?;
            formats::assemble_passes(&eph, &obs)
        };
        match load() {
            Ok(passes) => {
                unsafe { *out = Box::into_raw(Box::new(LndSolverInput { passes })) };
                LndStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of passes in a loaded input; 0 for a null handle.
///
/// # Safety
/// `input` must be a handle from [`lnd_input_load`] or null.
#[no_mangle]
pub unsafe extern "C" fn lnd_input_n_passes(input: *const LndSolverInput) -> usize {
    if input.is_null() {
        return 0;
    }
    unsafe { &*input }.passes.len()
}

/// Release an input handle. Null is a no-op.
///
/// # Safety
/// `input` must be a handle from [`lnd_input_load`], released exactly once.
#[no_mangle]
pub unsafe extern "C" fn lnd_input_free(input: *mut LndSolverInput) {
    if !input.is_null() {
        drop(unsafe { Box::from_raw(input) });
    }
}

/// Run the three-step solve (single pass) or multi-pass disambiguation on a
/// loaded input, with optional scenario TOML for solver parameters
/// (`config_path` may be null for defaults). Writes a solution handle to
/// `out`; release it with [`lnd_solution_free`].
///
/// # Safety
/// `input` must be a live handle; `config_path` null or NUL-terminated;
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lnd_solve(
    input: *const LndSolverInput,
    config_path: *const c_char,
    out: *mut *mut LndSolution,
) -> LndStatus {
    guarded(|| {
        if input.is_null() || out.is_null() {
            set_error("null input or output handle");
            return LndStatus::NullArgument;
        }
        let config = if config_path.is_null() {
            ScenarioConfig::default()
        } else {
            let path = match unsafe { cstr_to_path(config_path) } {
                Ok(p) => p,
                Err(s) => return s,
            };
            match ScenarioConfig::load(&path) {
                Ok(c) => c,
                Err(e) => return fail(e),
            }
        };
        let scenario = match config.to_scenario() {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let passes = &unsafe { &*input }.passes;
        let solved = if passes.len() == 1 {
            solve_single_pass(&passes[0], &scenario.solver, &scenario.constants)
                .map(|s| (s.estimate, None))
        } else {
            disambiguate_multipass(passes, &scenario.solver, &scenario.constants)
                .map(|s| (s.estimate, Some(s.ambiguous)))
        };
        match solved {
            Ok((estimate, ambiguous)) => {
                let sol = LndSolution { estimate, n_passes: passes.len(), ambiguous };
                unsafe { *out = Box::into_raw(Box::new(sol)) };
                LndStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn with_solution<F: FnOnce(&LndSolution) -> LndStatus>(
    sol: *const LndSolution,
    body: F,
) -> LndStatus {
    if sol.is_null() {
        set_error("null solution handle");
        return LndStatus::NullArgument;
    }
    body(unsafe { &*sol })
}

/// Receiver position estimate (km) into `out_xyz[0..3]`.
///
/// # Safety
/// `sol` must be a live solution handle; `out_xyz` must point to 3 f64.
#[no_mangle]
pub unsafe extern "C" fn lnd_solution_position(sol: *const LndSolution, out_xyz: *mut f64) -> LndStatus {
    guarded(|| {
        unsafe {
            with_solution(sol, |s| {
                if out_xyz.is_null() {
                    set_error("null output buffer");
                    return LndStatus::NullArgument;
                }
                std::ptr::copy_nonoverlapping(s.estimate.position_km.as_ptr(), out_xyz, 3);
                LndStatus::Ok
            })
        }
    })
}

/// Mirror-side candidate position (km); `InvalidArgument` when absent.
///
/// # Safety
/// `sol` must be a live solution handle; `out_xyz` must point to 3 f64.
#[no_mangle]
pub unsafe extern "C" fn lnd_solution_mirror(sol: *const LndSolution, out_xyz: *mut f64) -> LndStatus {
    guarded(|| {
        unsafe {
            with_solution(sol, |s| {
                if out_xyz.is_null() {
                    set_error("null output buffer");
                    return LndStatus::NullArgument;
                }
                match &s.estimate.mirror {
                    Some(m) => {
                        std::ptr::copy_nonoverlapping(m.position_km.as_ptr(), out_xyz, 3);
                        LndStatus::Ok
                    }
                    None => {
                        set_error("no mirror candidate on this solution");
                        LndStatus::InvalidArgument
                    }
                }
            })
        }
    })
}

/// Final weighted cost.
///
/// # Safety
/// `sol` live, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lnd_solution_cost(sol: *const LndSolution, out: *mut f64) -> LndStatus {
    guarded(|| {
        unsafe {
            with_solution(sol, |s| {
                if out.is_null() {
                    set_error("null output buffer");
                    return LndStatus::NullArgument;
                }
                *out = s.estimate.cost_final;
                LndStatus::Ok
            })
        }
    })
}

/// Iteration counts for steps 2 and 3.
///
/// # Safety
/// `sol` live; `out_step2` and `out_step3` valid.
#[no_mangle]
pub unsafe extern "C" fn lnd_solution_iterations(
    sol: *const LndSolution,
    out_step2: *mut u32,
    out_step3: *mut u32,
) -> LndStatus {
    guarded(|| {
        unsafe {
            with_solution(sol, |s| {
                if out_step2.is_null() || out_step3.is_null() {
                    set_error("null output buffer");
                    return LndStatus::NullArgument;
                }
                *out_step2 = s.estimate.iterations_step2 as u32;
                *out_step3 = s.estimate.iterations_step3 as u32;
                LndStatus::Ok
            })
        }
    })
}

/// Whether both descent steps converged (1) or hit a cap/degeneracy (0),
/// plus the pass count used.
///
/// # Safety
/// `sol` live; outputs valid.
#[no_mangle]
pub unsafe extern "C" fn lnd_solution_converged(
    sol: *const LndSolution,
    out_converged: *mut u8,
    out_n_passes: *mut usize,
) -> LndStatus {
    guarded(|| {
        unsafe {
            with_solution(sol, |s| {
                if out_converged.is_null() || out_n_passes.is_null() {
                    set_error("null output buffer");
                    return LndStatus::NullArgument;
                }
                *out_converged = u8::from(s.estimate.converged);
                *out_n_passes = s.n_passes;
                LndStatus::Ok
            })
        }
    })
}

/// Whether multi-pass clustering fell back to the joint-cost comparison:
/// 0 = clean clustering, 1 = ambiguous, 2 = single pass (not applicable).
///
/// # Safety
/// `sol` live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lnd_solution_ambiguous(sol: *const LndSolution, out: *mut u8) -> LndStatus {
    guarded(|| {
        unsafe {
            with_solution(sol, |s| {
                if out.is_null() {
                    set_error("null output buffer");
                    return LndStatus::NullArgument;
                }
                *out = match s.ambiguous {
                    Some(false) => 0,
                    Some(true) => 1,
                    None => 2,
                };
                LndStatus::Ok
            })
        }
    })
}

/// Release a solution handle. Null is a no-op.
///
/// # Safety
/// `sol` must be a handle from [`lnd_solve`], released exactly once.
#[no_mangle]
pub unsafe extern "C" fn lnd_solution_free(sol: *mut LndSolution) {
    if !sol.is_null() {
        drop(unsafe { Box::from_raw(sol) });
    }
}

/// Simulate one scenario realization to `out_dir` (ephemeris.json,
/// observations.csv, manifest.json), as the CLI `simulate` command does.
/// `config_path` may be null for defaults; `seed` overrides the scenario
/// seed; `passes` overrides the pass count when nonzero.
///
/// # Safety
/// Paths null or NUL-terminated as documented.
#[no_mangle]
pub unsafe extern "C" fn lnd_simulate_to_dir(
    config_path: *const c_char,
    seed: u64,
    passes: u32,
    out_dir: *const c_char,
) -> LndStatus {
    guarded(|| {
        let out = match unsafe { cstr_to_path(out_dir) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let config = if config_path.is_null() {
            ScenarioConfig::default()
        } else {
            let path = match unsafe { cstr_to_path(config_path) } {
                Ok(p) => p,
                Err(s) => return s,
            };
            match ScenarioConfig::load(&path) {
                Ok(c) => c,
                Err(e) => return fail(e),
            }
        };
        let run = || -> lunadop::Result<()> {
            let mut scenario = config.to_scenario()?;
            scenario.seed = seed;
            if passes > 0 {
                scenario.n_passes = passes as usize;
            }
            scenario.validate()?;
            let mut rng = trial_rng(scenario.seed, 0);
            let (geometry, _, _, _) = build_trial_geometry(&scenario, &mut rng)?;
            formats::write_ephemeris_json(
                &out.join("ephemeris.json"),
                &formats::EphemerisFile::from_passes(&geometry.passes),
            )?;
            let all_obs: Vec<_> =
                geometry.passes.iter().flat_map(|p| p.observations.iter().copied()).collect();
            formats::write_observations_csv(&out.join("observations.csv"), &all_obs)?;
            formats::write_manifest_json(
                &out.join("manifest.json"),
                &formats::ManifestFile {
                    schema: formats::MANIFEST_SCHEMA.into(),
                    scenario_hash: format!("{:016x}", lunadop::scenario::scenario_hash(&scenario)),
                    seed: scenario.seed,
                    receiver_true_km: Some(geometry.receiver.into()),
                    outputs: vec!["ephemeris.json".into(), "observations.csv".into()],
                },
            )?;
            Ok(())
        };
        match run() {
            Ok(()) => LndStatus::Ok,
            Err(e) => fail(e),
        }
    })
}
