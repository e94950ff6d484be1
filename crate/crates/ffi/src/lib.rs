//! C interface to `ptychonoise`.
//!
//! Every function returns a [`PtnStatus`]. On failure a description of the
//! error is kept per thread and can be read with [`ptn_last_error`]. Handles
//! are opaque and must be released with their matching `*_free` function.
//! Grids cross the boundary as row-major `double` buffers; complex grids are
//! interleaved `re, im` pairs.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ptychonoise::harness::{
    compare_schemes, export, load_record, reconstruction_seed, run_experiment, ExperimentConfig,
    ExperimentRecord, ReconstructionFile, RunKey, SimulationFile,
};
use ptychonoise::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    UnknownScheme = 6,
    Geometry = 7,
    Numeric = 8,
    BufferTooSmall = 9,
    NotAvailable = 10,
    Panic = 11,
}

impl From<&Error> for PtnStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::UnknownId(_) => PtnStatus::InvalidArgument,
            Error::Config(_) => PtnStatus::Config,
            Error::Io { .. } => PtnStatus::Io,
            Error::Format { .. } => PtnStatus::Format,
            Error::UnknownScheme(_) => PtnStatus::UnknownScheme,
            Error::OutOfBounds { .. }
            | Error::InfeasibleGeometry(_)
            | Error::RadiusTooLarge { .. }
            | Error::EmptyMask(_) => PtnStatus::Geometry,
            Error::Domain(_)
            | Error::ZeroStack
            | Error::NegativeMean(_)
            | Error::ZeroEstimate
            | Error::NonFinite(_) => PtnStatus::Numeric,
        }
    }
}

/// One simulated noisy realization plus its ground truth.
pub struct PtnSimulation(SimulationFile);

/// A finished reconstruction.
pub struct PtnReconstruction(ReconstructionFile);

/// A benchmark record.
pub struct PtnRecord(ExperimentRecord);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PtnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(PtnStatus::from(&e), e.to_string())
    }
}

fn fail(status: PtnStatus, message: &str) -> Failure {
    Failure(status, message.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PtnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtnStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PtnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(PtnStatus::NullPointer, what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PtnStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(PtnStatus::NullPointer, what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(PtnStatus::NullPointer, what))
}

unsafe fn fill(buf: *mut f64, len: usize, values: impl ExactSizeIterator<Item = f64>) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(fail(PtnStatus::NullPointer, "buffer"));
    }
    if len < values.len() {
        return Err(Failure(PtnStatus::BufferTooSmall, format!("buffer holds {len}, need {}", values.len())));
    }
    let dst = std::slice::from_raw_parts_mut(buf, len);
    for (d, v) in dst.iter_mut().zip(values) {
        *d = v;
    }
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ptn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Simulates realization `realization` of the experiment described by the TOML text `config`.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out_sim` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ptn_simulate(
    config: *const c_char,
    realization: usize,
    out_sim: *mut *mut PtnSimulation,
) -> PtnStatus {
    guard(|| {
        let slot = out(out_sim, "out_sim")?;
        let config = ExperimentConfig::from_toml_str(str_arg(config, "config")?)?;
        let sim = SimulationFile::generate(&config, realization)?;
        *slot = Box::into_raw(Box::new(PtnSimulation(sim)));
        Ok(())
    })
}

/// Loads a simulation written by `ptn_simulation_save` or the `simulate` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_sim` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ptn_simulation_load(path: *const c_char, out_sim: *mut *mut PtnSimulation) -> PtnStatus {
    guard(|| {
        let slot = out(out_sim, "out_sim")?;
        let sim = SimulationFile::load(&PathBuf::from(str_arg(path, "path")?))?;
        *slot = Box::into_raw(Box::new(PtnSimulation(sim)));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from this library and `path` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ptn_simulation_save(sim: *const PtnSimulation, path: *const c_char) -> PtnStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        sim.0.save(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of diffraction patterns and their width and height.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptn_simulation_shape(
    sim: *const PtnSimulation,
    count: *mut usize,
    width: *mut usize,
    height: *mut usize,
) -> PtnStatus {
    guard(|| {
        let ds = &handle(sim, "sim")?.0.dataset;
        let (w, h) = ds.pattern_dims();
        *out(count, "count")? = ds.patterns.len();
        *out(width, "width")? = w;
        *out(height, "height")? = h;
        Ok(())
    })
}

/// Copies pattern `index` into `buf` (at least width*height doubles).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ptn_simulation_copy_pattern(
    sim: *const PtnSimulation,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> PtnStatus {
    guard(|| {
        let ds = &handle(sim, "sim")?.0.dataset;
        let p = ds
            .patterns
            .get(index)
            .ok_or_else(|| Failure(PtnStatus::InvalidArgument, format!("pattern {index} of {}", ds.patterns.len())))?;
        fill(buf, len, p.data().iter().copied())
    })
}

/// Position-ordering seed the benchmark uses for this simulation's config.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptn_simulation_default_seed(sim: *const PtnSimulation, seed: *mut u64) -> PtnStatus {
    guard(|| {
        let sim = handle(sim, "sim")?;
        *out(seed, "seed")? = reconstruction_seed(&sim.0.config);
        Ok(())
    })
}

/// # Safety
/// `sim` must come from this library or be NULL; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptn_simulation_free(sim: *mut PtnSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Reconstructs with `scheme` ("1" to "20", or "adapter") from the constant start.
///
/// # Safety
/// `sim` must come from this library, `scheme` be NUL-terminated and `out_rec` valid.
#[no_mangle]
pub unsafe extern "C" fn ptn_reconstruct(
    sim: *const PtnSimulation,
    scheme: *const c_char,
    seed: u64,
    out_rec: *mut *mut PtnReconstruction,
) -> PtnStatus {
    guard(|| {
        let slot = out(out_rec, "out_rec")?;
        let sim = handle(sim, "sim")?;
        let run: RunKey = str_arg(scheme, "scheme")?.parse()?;
        let rec = ReconstructionFile::run(&sim.0, run, seed)?;
        *slot = Box::into_raw(Box::new(PtnReconstruction(rec)));
        Ok(())
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptn_reconstruction_final_error(rec: *const PtnReconstruction, error: *mut f64) -> PtnStatus {
    guard(|| {
        let rec = handle(rec, "rec")?;
        let e = rec.0.final_error.ok_or_else(|| fail(PtnStatus::NotAvailable, "no sweeps were run"))?;
        *out(error, "error")? = e;
        Ok(())
    })
}

/// Number of logged (sweep, error) points.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptn_reconstruction_curve_len(rec: *const PtnReconstruction, len: *mut usize) -> PtnStatus {
    guard(|| {
        *out(len, "len")? = handle(rec, "rec")?.0.error_log.len();
        Ok(())
    })
}

/// Copies the error after each sweep into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ptn_reconstruction_copy_curve(
    rec: *const PtnReconstruction,
    buf: *mut f64,
    len: usize,
) -> PtnStatus {
    guard(|| {
        let rec = handle(rec, "rec")?;
        fill(buf, len, rec.0.error_log.iter().map(|&(_, e)| e))
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptn_reconstruction_object_dims(
    rec: *const PtnReconstruction,
    width: *mut usize,
    height: *mut usize,
) -> PtnStatus {
    guard(|| {
        let (w, h) = handle(rec, "rec")?.0.object.dims();
        *out(width, "width")? = w;
        *out(height, "height")? = h;
        Ok(())
    })
}

/// Copies the reconstructed object as interleaved `re, im` pairs (2*width*height doubles).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ptn_reconstruction_copy_object(
    rec: *const PtnReconstruction,
    buf: *mut f64,
    len: usize,
) -> PtnStatus {
    guard(|| {
        let rec = handle(rec, "rec")?;
        let data = rec.0.object.data();
        let values: Vec<f64> = data.iter().flat_map(|c| [c.re, c.im]).collect();
        fill(buf, len, values.into_iter())
    })
}

/// # Safety
/// `rec` must come from this library or be NULL; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptn_reconstruction_free(rec: *mut PtnReconstruction) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Runs the full benchmark described by the TOML text `config`.
///
/// # Safety
/// `config` must be NUL-terminated and `out_record` valid.
#[no_mangle]
pub unsafe extern "C" fn ptn_bench(config: *const c_char, out_record: *mut *mut PtnRecord) -> PtnStatus {
    guard(|| {
        let slot = out(out_record, "out_record")?;
        let config = ExperimentConfig::from_toml_str(str_arg(config, "config")?)?;
        let record = run_experiment(&config)?;
        *slot = Box::into_raw(Box::new(PtnRecord(record)));
        Ok(())
    })
}

/// Writes summary.csv, curves.csv and record.json into `dir`.
///
/// # Safety
/// `record` must come from this library and `dir` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ptn_record_export(record: *const PtnRecord, dir: *const c_char) -> PtnStatus {
    guard(|| {
        let record = handle(record, "record")?;
        export(&record.0, &PathBuf::from(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Loads and verifies a record.json.
///
/// # Safety
/// `path` must be NUL-terminated and `out_record` valid.
#[no_mangle]
pub unsafe extern "C" fn ptn_record_load(path: *const c_char, out_record: *mut *mut PtnRecord) -> PtnStatus {
    guard(|| {
        let slot = out(out_record, "out_record")?;
        let record = load_record(&PathBuf::from(str_arg(path, "path")?))?;
        *slot = Box::into_raw(Box::new(PtnRecord(record)));
        Ok(())
    })
}

/// Median final error of `run` over its completed realizations.
///
/// # Safety
/// All pointers must be valid and `run` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ptn_record_median(record: *const PtnRecord, run: *const c_char, median: *mut f64) -> PtnStatus {
    guard(|| {
        let record = handle(record, "record")?;
        let run: RunKey = str_arg(run, "run")?.parse()?;
        let summary = record.0.summary(run).ok_or_else(|| Failure(PtnStatus::UnknownScheme, format!("{run} is not in this record")))?;
        *out(median, "median")? = summary.stats.median;
        Ok(())
    })
}

/// Paired comparison: median of `candidate - baseline` and the sign-test p-value.
///
/// # Safety
/// All pointers must be valid and the run names NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ptn_compare(
    record: *const PtnRecord,
    baseline: *const c_char,
    candidate: *const c_char,
    median_difference: *mut f64,
    p_value: *mut f64,
) -> PtnStatus {
    guard(|| {
        let record = handle(record, "record")?;
        let baseline: RunKey = str_arg(baseline, "baseline")?.parse()?;
        let candidate: RunKey = str_arg(candidate, "candidate")?.parse()?;
        let cmp = compare_schemes(&record.0, baseline, candidate)?;
        *out(median_difference, "median_difference")? = cmp.median_difference;
        *out(p_value, "p_value")? = cmp.p_value;
        Ok(())
    })
}

/// # Safety
/// `record` must come from this library or be NULL; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptn_record_free(record: *mut PtnRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}
