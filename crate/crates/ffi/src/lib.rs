//! C ABI over `ivbandit`.
//!
//! Every function returns an [`IvbStatus`]; on failure the message is kept per thread
//! and can be copied out with [`ivb_last_error_message`]. Objects are opaque handles
//! created by `*_new`/`*_from_*` functions and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ivbandit::algorithms::{run_cpeg, run_cpeug, AlgoParams, TrialResult};
use ivbandit::design::{e_design, pair_differences, rho_star, xy_design, Design, SolverOptions};
use ivbandit::harness::{preset, run_experiment, write_outputs, ExperimentConfig, ResultsTable};
use ivbandit::instances::{make_interpolation, make_jump_around, ProblemInstance};
use ivbandit::numerics::vector_from;
use ivbandit::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Numerical = 4,
    CapExceeded = 5,
    BufferTooSmall = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque problem instance.
pub struct IvbInstance(ProblemInstance);

/// Opaque experiment configuration.
pub struct IvbExperiment(ExperimentConfig);

/// Opaque table of trial results.
pub struct IvbResults(ResultsTable);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IvbTrialSummary {
    pub recommended: u64,
    pub correct: bool,
    pub total_samples: u64,
    pub phases: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IvbResultRow {
    pub trial: u64,
    pub seed: u64,
    pub samples: u64,
    pub correct: bool,
    /// -1 when the trial did not finish.
    pub recommended: i64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> IvbStatus {
    match err {
        Error::Parse { .. } | Error::Validation(_) => IvbStatus::InvalidConfig,
        Error::SingularDesign(_) | Error::NotPsd | Error::DegenerateSpan(_) => IvbStatus::Numerical,
        Error::CapExceeded { .. } => IvbStatus::CapExceeded,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => IvbStatus::Io,
        _ => IvbStatus::InvalidArgument,
    }
}

fn fail(status: IvbStatus, msg: impl Into<String>) -> IvbStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), IvbStatus>) -> IvbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IvbStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(IvbStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lift<T>(r: ivbandit::Result<T>) -> Result<T, IvbStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, IvbStatus> {
    p.as_ref()
        .ok_or_else(|| fail(IvbStatus::NullPointer, "null handle"))
}

unsafe fn as_mut<'a, T>(p: *mut T) -> Result<&'a mut T, IvbStatus> {
    p.as_mut()
        .ok_or_else(|| fail(IvbStatus::NullPointer, "null pointer"))
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], IvbStatus> {
    if p.is_null() {
        return Err(fail(IvbStatus::NullPointer, "null array"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, IvbStatus> {
    if p.is_null() {
        return Err(fail(IvbStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(IvbStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), IvbStatus> {
    *as_mut(out)? = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ivb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated, truncated
/// to `len`). Returns the full message length in bytes, 0 when there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ivb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Jump-around compliance instance on `d` levels.
///
/// # Safety
/// `theta` must point to `d` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_instance_jump_around(
    d: usize,
    theta: *const f64,
    sigma_u_sq: f64,
    out: *mut *mut IvbInstance,
) -> IvbStatus {
    guard(|| {
        let theta = slice(theta, d)?;
        if !(sigma_u_sq > 0.0) {
            return Err(fail(
                IvbStatus::InvalidArgument,
                "sigma_u_sq must be positive",
            ));
        }
        let inst = lift(make_jump_around(d, vector_from(theta), sigma_u_sq.sqrt()))?;
        emit(out, IvbInstance(inst))
    })
}

/// Interpolation instance `Γ = (1−ε)/d·11ᵀ + εI`.
///
/// # Safety
/// `theta` must point to `d` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_instance_interpolation(
    d: usize,
    theta: *const f64,
    eps: f64,
    noise_scale: f64,
    out: *mut *mut IvbInstance,
) -> IvbStatus {
    guard(|| {
        let theta = slice(theta, d)?;
        let inst = lift(make_interpolation(d, vector_from(theta), eps, noise_scale))?;
        emit(out, IvbInstance(inst))
    })
}

/// # Safety
/// `inst` must be null or a handle from this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn ivb_instance_free(inst: *mut IvbInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_instance_dim(inst: *const IvbInstance, out: *mut usize) -> IvbStatus {
    guard(|| {
        *as_mut(out)? = as_ref(inst)?.0.dim();
        Ok(())
    })
}

/// Number of instruments, i.e. the length of a design's weight vector.
///
/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_instance_num_arms(
    inst: *const IvbInstance,
    out: *mut usize,
) -> IvbStatus {
    guard(|| {
        *as_mut(out)? = as_ref(inst)?.0.arms().len();
        Ok(())
    })
}

/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_instance_best_arm(
    inst: *const IvbInstance,
    out: *mut usize,
) -> IvbStatus {
    guard(|| {
        *as_mut(out)? = lift(as_ref(inst)?.0.best_arm())?.index;
        Ok(())
    })
}

unsafe fn write_design(
    design: &Design,
    weights: *mut f64,
    len: usize,
    objective: *mut f64,
) -> Result<(), IvbStatus> {
    if len < design.weights.len() {
        return Err(fail(
            IvbStatus::BufferTooSmall,
            format!("need {} weights, buffer holds {len}", design.weights.len()),
        ));
    }
    if weights.is_null() {
        return Err(fail(IvbStatus::NullPointer, "null weights buffer"));
    }
    std::slice::from_raw_parts_mut(weights, design.weights.len()).copy_from_slice(&design.weights);
    *as_mut(objective)? = design.objective_value;
    Ok(())
}

/// XY-optimal design over all pairs of evaluation arms, under the true `Γ`.
///
/// # Safety
/// `weights` must hold `len` doubles; `objective` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_xy_design(
    inst: *const IvbInstance,
    weights: *mut f64,
    len: usize,
    objective: *mut f64,
) -> IvbStatus {
    guard(|| {
        let inst = &as_ref(inst)?.0;
        let all: Vec<usize> = (0..inst.targets().len()).collect();
        let dirs = pair_differences(inst.targets(), &all);
        let design = lift(xy_design(
            &dirs,
            inst.arms(),
            inst.gamma(),
            &SolverOptions::default(),
        ))?;
        write_design(&design, weights, len, objective)
    })
}

/// E-optimal design; `objective` receives `κ₀`.
///
/// # Safety
/// `weights` must hold `len` doubles; `objective` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_e_design(
    inst: *const IvbInstance,
    weights: *mut f64,
    len: usize,
    objective: *mut f64,
) -> IvbStatus {
    guard(|| {
        let inst = &as_ref(inst)?.0;
        let (design, _) = lift(e_design(inst.arms(), &SolverOptions::default()))?;
        write_design(&design, weights, len, objective)
    })
}

/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_rho_star(
    inst: *const IvbInstance,
    gamma: f64,
    out: *mut f64,
) -> IvbStatus {
    guard(|| {
        let inst = &as_ref(inst)?.0;
        *as_mut(out)? = lift(rho_star(inst, gamma, &SolverOptions::default()))?;
        Ok(())
    })
}

fn summary(t: &TrialResult) -> IvbTrialSummary {
    IvbTrialSummary {
        recommended: t.recommended as u64,
        correct: t.correct,
        total_samples: t.total_samples,
        phases: t.trace.phases.len() as u64,
    }
}

/// One known-Γ elimination run with default parameters for the instance.
///
/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_run_cpeg(
    inst: *const IvbInstance,
    delta: f64,
    seed: u64,
    out: *mut IvbTrialSummary,
) -> IvbStatus {
    guard(|| {
        let inst = &as_ref(inst)?.0;
        let params = lift(AlgoParams::for_instance(inst, delta))?;
        let res = lift(run_cpeg(
            inst,
            &params,
            ChaCha8Rng::seed_from_u64(seed),
            seed,
        ))?;
        *as_mut(out)? = summary(&res);
        Ok(())
    })
}

/// One unknown-Γ elimination run with default parameters for the instance.
///
/// # Safety
/// `inst` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_run_cpeug(
    inst: *const IvbInstance,
    delta: f64,
    seed: u64,
    out: *mut IvbTrialSummary,
) -> IvbStatus {
    guard(|| {
        let inst = &as_ref(inst)?.0;
        let params = lift(AlgoParams::for_instance(inst, delta))?;
        let res = lift(run_cpeug(
            inst,
            &params,
            ChaCha8Rng::seed_from_u64(seed),
            seed,
        ))?;
        *as_mut(out)? = summary(&res);
        Ok(())
    })
}

/// Parses an experiment from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_experiment_from_toml(
    toml: *const c_char,
    out: *mut *mut IvbExperiment,
) -> IvbStatus {
    guard(|| {
        let cfg = lift(ExperimentConfig::from_toml(string(toml)?, "ffi"))?;
        emit(out, IvbExperiment(cfg))
    })
}

/// Loads a built-in preset by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_experiment_from_preset(
    name: *const c_char,
    out: *mut *mut IvbExperiment,
) -> IvbStatus {
    guard(|| {
        let cfg = lift(preset(string(name)?))?;
        emit(out, IvbExperiment(cfg))
    })
}

/// Overrides the trial count, master seed and worker count; a zero `workers` keeps the default.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ivb_experiment_configure(
    exp: *mut IvbExperiment,
    trials: usize,
    master_seed: u64,
    workers: usize,
) -> IvbStatus {
    guard(|| {
        let cfg = &mut as_mut(exp)?.0;
        if trials == 0 {
            return Err(fail(IvbStatus::InvalidConfig, "trials must be at least 1"));
        }
        cfg.trials = trials;
        cfg.master_seed = master_seed;
        cfg.workers = (workers > 0).then_some(workers);
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ivb_experiment_free(exp: *mut IvbExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `exp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_experiment_run(
    exp: *const IvbExperiment,
    out: *mut *mut IvbResults,
) -> IvbStatus {
    guard(|| {
        let table = lift(run_experiment(&as_ref(exp)?.0))?;
        emit(out, IvbResults(table))
    })
}

/// # Safety
/// `res` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_results_len(res: *const IvbResults, out: *mut usize) -> IvbStatus {
    guard(|| {
        *as_mut(out)? = as_ref(res)?.0.rows.len();
        Ok(())
    })
}

/// # Safety
/// `res` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ivb_results_row(
    res: *const IvbResults,
    index: usize,
    out: *mut IvbResultRow,
) -> IvbStatus {
    guard(|| {
        let rows = &as_ref(res)?.0.rows;
        let row = rows.get(index).ok_or_else(|| {
            fail(
                IvbStatus::InvalidArgument,
                format!("row {index} out of {}", rows.len()),
            )
        })?;
        *as_mut(out)? = IvbResultRow {
            trial: row.trial as u64,
            seed: row.seed,
            samples: row.samples,
            correct: row.correct,
            recommended: row.recommended.map_or(-1, |r| r as i64),
        };
        Ok(())
    })
}

/// Writes `results.csv` and `summary.json` into `dir`.
///
/// # Safety
/// `res` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ivb_results_write(
    res: *const IvbResults,
    dir: *const c_char,
) -> IvbStatus {
    guard(|| {
        let table = &as_ref(res)?.0;
        lift(write_outputs(table, Path::new(string(dir)?), false))?;
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ivb_results_free(res: *mut IvbResults) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
