//! C ABI over the swarmplan simulator.
//!
//! Every fallible function returns an [`SpStatus`]. On failure a message is
//! kept per thread and can be read with [`sp_last_error`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::Path;

use swarmplan::grid_world::{build_map, GridMap, MapConfig};
use swarmplan::harness::{run_matrix, write_outputs, ExperimentSpec};
use swarmplan::planner::{run_episode, Clock, EpisodeOutcome, PlannerAlgo, PlannerConfig};
use swarmplan::trajectory::replay;
use swarmplan::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Generation = 4,
    Io = 5,
    Parse = 6,
    Numeric = 7,
    Panic = 8,
}

/// Map size preset.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpScale {
    /// 32 cells per side.
    Desk = 0,
    /// 64 cells per side.
    Paper = 1,
}

/// Headline numbers of one episode.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpMetrics {
    pub elapsed_ms: u64,
    pub expanded_nodes: u64,
    pub cost: f64,
    pub ticks: u64,
    pub targets: u32,
    pub captured: u32,
    pub budget_exhausted: bool,
    pub plans: u64,
    pub fallbacks: u64,
}

/// A generated world.
pub struct SpMap(GridMap);

/// A finished episode with its trajectory.
pub struct SpEpisode(EpisodeOutcome);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SpStatus, msg: impl Into<String>) -> SpStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> SpStatus {
    match e {
        Error::InvalidConfig(_) => SpStatus::InvalidConfig,
        Error::Generation(_) => SpStatus::Generation,
        Error::NonFiniteObjective { .. } | Error::NonFiniteProbability { .. } => SpStatus::Numeric,
        Error::MalformedLog { .. } | Error::Parse { .. } => SpStatus::Parse,
        Error::Io { .. } => SpStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> SpStatus + UnwindSafe) -> SpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(f) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SpStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lift<T>(r: swarmplan::Result<T>) -> Result<T, SpStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, SpStatus> {
    if p.is_null() {
        return Err(fail(SpStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn map_config(scale: SpScale) -> MapConfig {
    match scale {
        SpScale::Desk => MapConfig::desk_scale(),
        SpScale::Paper => MapConfig::paper_scale(),
    }
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($p:expr, $name:literal) => {
        if $p.is_null() {
            return fail(SpStatus::NullPointer, concat!($name, " is null"));
        }
    };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build map `map_id` (1..=5) at the given scale.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sp_map_build(map_id: u8, scale: SpScale, seed: u64, out: *mut *mut SpMap) -> SpStatus {
    non_null!(out, "out");
    guard(move || {
        let map = try_ffi!(lift(build_map(map_id, &map_config(scale), seed)));
        *out = Box::into_raw(Box::new(SpMap(map)));
        SpStatus::Ok
    })
}

/// # Safety
/// `map` must come from [`sp_map_build`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sp_map_free(map: *mut SpMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Grid size in cells along x, y and z.
///
/// # Safety
/// `map` must be a live handle and `dims` must point to three writable values.
#[no_mangle]
pub unsafe extern "C" fn sp_map_dims(map: *const SpMap, dims: *mut u64) -> SpStatus {
    non_null!(map, "map");
    non_null!(dims, "dims");
    for (i, d) in (*map).0.dims.iter().enumerate() {
        *dims.add(i) = *d as u64;
    }
    SpStatus::Ok
}

/// Whether a cell is statically occupied. Cells outside the grid count as occupied.
///
/// # Safety
/// `map` must be a live handle and `occupied` writable.
#[no_mangle]
pub unsafe extern "C" fn sp_map_is_static(map: *const SpMap, x: i64, y: i64, z: i64, occupied: *mut bool) -> SpStatus {
    non_null!(map, "map");
    non_null!(occupied, "occupied");
    *occupied = (*map).0.is_static([x, y, z]);
    SpStatus::Ok
}

/// Share of cells that are statically occupied.
///
/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_map_static_fraction(map: *const SpMap) -> f64 {
    if map.is_null() {
        return f64::NAN;
    }
    (*map).0.static_occupancy().fraction()
}

/// Number of goals on the map.
///
/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_map_target_count(map: *const SpMap) -> u32 {
    if map.is_null() {
        return 0;
    }
    (*map).0.targets.len() as u32
}

/// Run one episode with the default planner settings and the tick clock.
/// `algo` is one of GSO, hGSO, IWO, hIWO, BBO, hBBO (case-insensitive).
///
/// # Safety
/// `algo` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sp_episode_run(
    map_id: u8,
    scale: SpScale,
    algo: *const c_char,
    seed: u64,
    out: *mut *mut SpEpisode,
) -> SpStatus {
    non_null!(out, "out");
    guard(move || {
        let name = try_ffi!(read_str(algo, "algo"));
        let algo: PlannerAlgo = try_ffi!(lift(name.parse()));
        let cfg = PlannerConfig {
            clock: Clock::Tick,
            ..PlannerConfig::default()
        };
        let outcome = try_ffi!(lift(run_episode(map_id, algo, &map_config(scale), &cfg, seed)));
        *out = Box::into_raw(Box::new(SpEpisode(outcome)));
        SpStatus::Ok
    })
}

/// # Safety
/// `ep` must come from [`sp_episode_run`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sp_episode_free(ep: *mut SpEpisode) {
    if !ep.is_null() {
        drop(Box::from_raw(ep));
    }
}

/// # Safety
/// `ep` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sp_episode_metrics(ep: *const SpEpisode, out: *mut SpMetrics) -> SpStatus {
    non_null!(ep, "episode");
    non_null!(out, "out");
    let o = &(*ep).0;
    *out = SpMetrics {
        elapsed_ms: o.metrics.elapsed_ms,
        expanded_nodes: o.metrics.expanded_nodes,
        cost: o.metrics.cost,
        ticks: o.summary.ticks,
        targets: o.summary.targets as u32,
        captured: o.summary.captured as u32,
        budget_exhausted: o.summary.budget_exhausted,
        plans: o.summary.plans,
        fallbacks: o.summary.fallbacks,
    };
    SpStatus::Ok
}

/// Number of logged ticks, including tick 0.
///
/// # Safety
/// `ep` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_episode_tick_count(ep: *const SpEpisode) -> u64 {
    if ep.is_null() {
        return 0;
    }
    (*ep).0.log.records.len() as u64
}

/// Robot position at logged tick `index`.
///
/// # Safety
/// `ep` must be a live handle and `xyz` must point to three writable values.
#[no_mangle]
pub unsafe extern "C" fn sp_episode_position(ep: *const SpEpisode, index: u64, xyz: *mut f64) -> SpStatus {
    non_null!(ep, "episode");
    non_null!(xyz, "xyz");
    let records = &(*ep).0.log.records;
    let Some(r) = usize::try_from(index).ok().and_then(|i| records.get(i)) else {
        return fail(
            SpStatus::InvalidArgument,
            format!("tick index {index} out of range (0..{})", records.len()),
        );
    };
    *xyz = r.position.x;
    *xyz.add(1) = r.position.y;
    *xyz.add(2) = r.position.z;
    SpStatus::Ok
}

/// Re-simulate the world and count ticks where the robot was in an occupied cell.
///
/// # Safety
/// `ep` must be a live handle and `violations` writable.
#[no_mangle]
pub unsafe extern "C" fn sp_episode_replay(ep: *const SpEpisode, violations: *mut u64) -> SpStatus {
    non_null!(ep, "episode");
    non_null!(violations, "violations");
    let ep = &*ep;
    guard(move || {
        *violations = replay(&ep.0.log).violations.len() as u64;
        SpStatus::Ok
    })
}

/// Write the episode's trajectory log to `path`.
///
/// # Safety
/// `ep` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sp_episode_write_log(ep: *const SpEpisode, path: *const c_char) -> SpStatus {
    non_null!(ep, "episode");
    let ep = &*ep;
    guard(move || {
        let path = try_ffi!(read_str(path, "path"));
        try_ffi!(lift(ep.0.log.write(Path::new(path))));
        SpStatus::Ok
    })
}

/// Run an experiment spec file and write its tables to `out_dir`.
/// `episodes` receives the number of episodes run and may be null.
///
/// # Safety
/// `spec_path` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sp_experiment_run(
    spec_path: *const c_char,
    out_dir: *const c_char,
    episodes: *mut u64,
) -> SpStatus {
    guard(move || {
        let spec_path = try_ffi!(read_str(spec_path, "spec_path"));
        let out_dir = try_ffi!(read_str(out_dir, "out_dir"));
        let spec = try_ffi!(lift(ExperimentSpec::load(Path::new(spec_path))));
        let result = try_ffi!(lift(run_matrix(&spec)));
        try_ffi!(lift(write_outputs(&result, Path::new(out_dir))));
        if !episodes.is_null() {
            *episodes = result.episodes.len() as u64;
        }
        SpStatus::Ok
    })
}
