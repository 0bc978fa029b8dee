//! C ABI over the faultscope engine.
//!
//! Objects are opaque handles created by `fs_*_load`/`fs_*_new`/`fs_*_run`
//! functions and released with the matching `fs_*_free`. Every fallible
//! call returns an [`FsStatus`]; on failure `fs_last_error` holds a message
//! for the calling thread. Strings returned by the library are released
//! with `fs_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use faultscope::campaign::{evaluate, Verdict};
use faultscope::config::CampaignFile;
use faultscope::emu::{NoHooks, RunOutcome};
use faultscope::faults::resolve_models;
use faultscope::{run_campaign, CampaignConfig, CampaignReport, Emulator, RegId};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Campaign = 4,
    Emulator = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Verdict of a single run, mirroring the campaign classification.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsVerdict {
    Exploitable = 0,
    OracleRejected = 1,
    Timeout = 2,
    InvalidAssembly = 3,
    MemoryError = 4,
    HardFault = 5,
}

impl From<Verdict> for FsVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Exploitable => FsVerdict::Exploitable,
            Verdict::OracleRejected => FsVerdict::OracleRejected,
            Verdict::Timeout => FsVerdict::Timeout,
            Verdict::InvalidAssembly => FsVerdict::InvalidAssembly,
            Verdict::MemoryError => FsVerdict::MemoryError,
            Verdict::HardFault => FsVerdict::HardFault,
        }
    }
}

/// Campaign counters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FsCounters {
    pub sequences: u64,
    pub points: u64,
    pub instantiations: u64,
    pub runs: u64,
    pub dry_runs: u64,
    pub pruned: u64,
    pub exploitable: u64,
    pub oracle_rejected: u64,
    pub timeouts: u64,
    pub invalid_assembly: u64,
    pub memory_errors: u64,
    pub hard_faults: u64,
}

/// A loaded campaign: start state, models, oracle and limits.
pub struct FsConfig(CampaignConfig);

/// The result of `fs_campaign_run`.
pub struct FsReport(CampaignReport);

/// A stand-alone emulator at a campaign's start state.
pub struct FsEmulator {
    emu: Emulator,
    halting_points: Vec<u32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: FsStatus, msg: impl ToString) -> FsStatus {
    let msg = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
    status
}

fn guard(f: impl FnOnce() -> FsStatus) -> FsStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(FsStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, FsStatus> {
    if p.is_null() {
        return Err(fail(FsStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(FsStatus::InvalidUtf8, e))
}

unsafe fn put<T>(out: *mut T, value: T) -> FsStatus {
    if out.is_null() {
        return fail(FsStatus::NullArgument, "null output pointer");
    }
    out.write(value);
    FsStatus::Ok
}

macro_rules! handle {
    ($p:expr) => {
        match $p.as_ref() {
            Some(h) => h,
            None => return fail(FsStatus::NullArgument, "null handle"),
        }
    };
}

macro_rules! handle_mut {
    ($p:expr) => {
        match $p.as_mut() {
            Some(h) => h,
            None => return fail(FsStatus::NullArgument, "null handle"),
        }
    };
}

macro_rules! try_arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a JSON campaign file; relative paths resolve against its folder.
///
/// # Safety
/// `path` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_config_load(path: *const c_char, out: *mut *mut FsConfig) -> FsStatus {
    guard(|| {
        let path = try_arg!(str_arg(path));
        match CampaignFile::load(Path::new(path)).and_then(|f| f.build()) {
            Ok(cfg) => put(out, Box::into_raw(Box::new(FsConfig(cfg)))),
            Err(e) => fail(FsStatus::Config, e),
        }
    })
}

/// # Safety
/// `cfg` must come from `fs_config_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fs_config_free(cfg: *mut FsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Replaces the fault models: a preset name or comma-separated model ids.
///
/// # Safety
/// `cfg` must be a live handle and `selection` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn fs_config_set_models(cfg: *mut FsConfig, selection: *const c_char) -> FsStatus {
    guard(|| {
        let cfg = handle_mut!(cfg);
        let sel = try_arg!(str_arg(selection));
        match resolve_models(sel) {
            Ok(models) => {
                cfg.0.models = models;
                FsStatus::Ok
            }
            Err(e) => fail(FsStatus::Config, e),
        }
    })
}

/// Sets the highest fault order (at least 1).
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_config_set_max_order(cfg: *mut FsConfig, max_order: usize) -> FsStatus {
    let cfg = handle_mut!(cfg);
    if max_order == 0 {
        return fail(FsStatus::OutOfRange, "max order must be at least 1");
    }
    cfg.0.max_order = max_order;
    FsStatus::Ok
}

/// Sets the worker thread count (at least 1).
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_config_set_workers(cfg: *mut FsConfig, workers: usize) -> FsStatus {
    let cfg = handle_mut!(cfg);
    if workers == 0 {
        return fail(FsStatus::OutOfRange, "at least one worker is needed");
    }
    cfg.0.workers = workers;
    FsStatus::Ok
}

/// Sets the instruction budget per run.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_config_set_timeout(cfg: *mut FsConfig, timeout: u64) -> FsStatus {
    let cfg = handle_mut!(cfg);
    cfg.0.timeout = timeout;
    FsStatus::Ok
}

/// Runs the fault-free program from the start state and classifies it.
///
/// # Safety
/// `cfg` must be a live handle; `verdict` and `instructions` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_config_reference_run(
    cfg: *const FsConfig,
    verdict: *mut FsVerdict,
    instructions: *mut u64,
) -> FsStatus {
    guard(|| {
        let cfg = &handle!(cfg).0;
        if verdict.is_null() || instructions.is_null() {
            return fail(FsStatus::NullArgument, "null output pointer");
        }
        let mut emu = cfg.emulator.clone();
        let start = emu.instr_count();
        let outcome = emu.run_until(&mut NoHooks, &cfg.halting_points, cfg.timeout);
        verdict.write(evaluate(cfg.oracle.as_ref(), &emu.state, &outcome).into());
        instructions.write(emu.instr_count() - start);
        FsStatus::Ok
    })
}

/// Runs the campaign. The report is released with `fs_report_free`.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_campaign_run(cfg: *const FsConfig, out: *mut *mut FsReport) -> FsStatus {
    guard(|| {
        let cfg = &handle!(cfg).0;
        match run_campaign(cfg) {
            Ok(r) => put(out, Box::into_raw(Box::new(FsReport(r)))),
            Err(e) => fail(FsStatus::Campaign, e),
        }
    })
}

/// # Safety
/// `report` must come from `fs_campaign_run` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fs_report_free(report: *mut FsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_report_counters(report: *const FsReport, out: *mut FsCounters) -> FsStatus {
    let c = &handle!(report).0.counters;
    put(
        out,
        FsCounters {
            sequences: c.sequences,
            points: c.points,
            instantiations: c.instantiations,
            runs: c.runs,
            dry_runs: c.dry_runs,
            pruned: c.pruned,
            exploitable: c.exploitable,
            oracle_rejected: c.oracle_rejected,
            timeouts: c.timeouts,
            invalid_assembly: c.invalid_assembly,
            memory_errors: c.memory_errors,
            hard_faults: c.hard_faults,
        },
    )
}

/// Number of exploitable combinations.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_report_exploitable_count(report: *const FsReport, out: *mut usize) -> FsStatus {
    put(out, handle!(report).0.exploitable.len())
}

/// The full report as JSON. Free the string with `fs_string_free`.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_report_to_json(report: *const FsReport, out: *mut *mut c_char) -> FsStatus {
    guard(|| {
        let json = handle!(report).0.to_json();
        match CString::new(json) {
            Ok(s) => put(out, s.into_raw()),
            Err(e) => fail(FsStatus::Campaign, e),
        }
    })
}

/// An emulator at the campaign start state, stopping at its halting points.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_emulator_new(cfg: *const FsConfig, out: *mut *mut FsEmulator) -> FsStatus {
    let cfg = &handle!(cfg).0;
    let emu = FsEmulator {
        emu: cfg.emulator.clone(),
        halting_points: cfg.halting_points.clone(),
    };
    put(out, Box::into_raw(Box::new(emu)))
}

/// # Safety
/// `emu` must come from `fs_emulator_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fs_emulator_free(emu: *mut FsEmulator) {
    if !emu.is_null() {
        drop(Box::from_raw(emu));
    }
}

/// Executes one instruction. Emulator errors return `FsStatus::Emulator`.
///
/// # Safety
/// `emu` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_emulator_step(emu: *mut FsEmulator) -> FsStatus {
    guard(|| match handle_mut!(emu).emu.step(&mut NoHooks) {
        Ok(_) => FsStatus::Ok,
        Err(e) => fail(FsStatus::Emulator, e),
    })
}

/// Runs up to `budget` instructions. `halted` is set when a halting point
/// was reached.
///
/// # Safety
/// `emu` must be a live handle and `halted` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_emulator_run(emu: *mut FsEmulator, budget: u64, halted: *mut bool) -> FsStatus {
    guard(|| {
        let e = handle_mut!(emu);
        match e.emu.run_until(&mut NoHooks, &e.halting_points, budget) {
            RunOutcome::Error { error, .. } => fail(FsStatus::Emulator, error),
            out => put(halted, matches!(out, RunOutcome::HaltingPointHit { .. })),
        }
    })
}

/// Reads register `index` (0-15 for R0-R15, 16 for xPSR).
///
/// # Safety
/// `emu` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_emulator_reg(emu: *const FsEmulator, index: u32, out: *mut u32) -> FsStatus {
    let e = handle!(emu);
    match index {
        0..=15 => put(out, e.emu.reg(RegId(index as u8))),
        16 => put(out, e.emu.state.xpsr),
        _ => fail(FsStatus::OutOfRange, format!("no register {index}")),
    }
}

/// Writes register `index` (0-15).
///
/// # Safety
/// `emu` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_emulator_set_reg(emu: *mut FsEmulator, index: u32, value: u32) -> FsStatus {
    let e = handle_mut!(emu);
    if index > 15 {
        return fail(FsStatus::OutOfRange, format!("no register {index}"));
    }
    e.emu.set_reg(RegId(index as u8), value);
    FsStatus::Ok
}

/// Instructions retired since the emulator was created from reset.
///
/// # Safety
/// `emu` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_emulator_instr_count(emu: *const FsEmulator, out: *mut u64) -> FsStatus {
    put(out, handle!(emu).emu.instr_count())
}
