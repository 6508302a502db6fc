//! C ABI over the lexicast library: opaque model handles, status codes,
//! and a thread-local last-error message.
//!
//! Conventions: every function returning [`LexicastStatus`] reports
//! failure details through [`lexicast_last_error`]; strings handed out
//! through out-pointers belong to the caller and must be released with
//! [`lexicast_string_free`]; handles from [`lexicast_model_load`] must
//! be released with [`lexicast_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lexicast::embeddings::EmbeddingTable;
use lexicast::geometry::{distance_matrix, gdv, mds_classical};
use lexicast::pipeline::{run_experiment, ExperimentConfig};
use lexicast::probe::LabeledPointCloud;
use lexicast::seqmodel::{load_checkpoint, predict_word, ModelParams};
use lexicast::LexError;
use ndarray::Array2;

/// Result of every fallible call in this interface.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexicastStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Contract = 6,
    Numeric = 7,
    Analysis = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|cell| {
        *cell.borrow_mut() = Some(CString::new(sanitized).expect("nul stripped"));
    });
}

fn clear_error() {
    LAST_ERROR.with(|cell| *cell.borrow_mut() = None);
}

fn fail(err: &LexError) -> LexicastStatus {
    set_error(err.to_string());
    match err {
        LexError::Io { .. } => LexicastStatus::Io,
        LexError::Decode { .. } => LexicastStatus::Parse,
        LexError::Parse { .. } => LexicastStatus::Parse,
        LexError::Config(_) => LexicastStatus::Config,
        LexError::Contract(_) => LexicastStatus::Contract,
        LexError::Numeric { .. } => LexicastStatus::Numeric,
        LexError::Analysis(_) => LexicastStatus::Analysis,
    }
}

fn null_arg(name: &str) -> LexicastStatus {
    set_error(format!("{name} must not be null"));
    LexicastStatus::NullArgument
}

fn guard(body: impl FnOnce() -> LexicastStatus) -> LexicastStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            LexicastStatus::Panic
        }
    }
}

/// Reads a required UTF-8 string argument.
///
/// # Safety
/// `ptr` must be null or point to a nul-terminated string.
unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, LexicastStatus> {
    if ptr.is_null() {
        return Err(null_arg(name));
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        LexicastStatus::InvalidUtf8
    })
}

/// Version of this library as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn lexicast_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the calling thread's most recent failure, or null after
/// a success. The pointer stays valid until the next call on the same
/// thread.
#[no_mangle]
pub extern "C" fn lexicast_last_error() -> *const c_char {
    LAST_ERROR.with(|cell| {
        cell.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// A loaded checkpoint: the trained model plus its embedding table.
pub struct LexicastModel {
    model: ModelParams,
    table: EmbeddingTable,
}

/// Loads a checkpoint file into a fresh handle stored in `*out`.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must point to writable
/// pointer storage.
#[no_mangle]
pub unsafe extern "C" fn lexicast_model_load(
    path: *const c_char,
    out: *mut *mut LexicastModel,
) -> LexicastStatus {
    guard(|| {
        if out.is_null() {
            return null_arg("out");
        }
        let path = match unsafe { cstr_arg(path, "path") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match load_checkpoint(Path::new(path)) {
            Ok((model, table)) => {
                clear_error();
                let handle = Box::new(LexicastModel { model, table });
                unsafe { *out = Box::into_raw(handle) };
                LexicastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a handle from [`lexicast_model_load`]. Null is a no-op.
///
/// # Safety
/// `model` must be a pointer returned by [`lexicast_model_load`] that
/// has not been freed yet, or null.
#[no_mangle]
pub unsafe extern "C" fn lexicast_model_free(model: *mut LexicastModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

macro_rules! shape_getter {
    ($(#[$doc:meta])* $name:ident, $handle:ident => $field:expr) => {
        $(#[$doc])*
        ///
        /// # Safety
        /// `model` must be a live handle from [`lexicast_model_load`],
        /// or null (which yields -1).
        #[no_mangle]
        pub unsafe extern "C" fn $name(model: *const LexicastModel) -> i32 {
            if model.is_null() {
                return -1;
            }
            let $handle = unsafe { &*model };
            ($field) as i32
        }
    };
}

shape_getter!(
    /// Input window length of the loaded model.
    lexicast_model_window,
    h => h.model.shape.window
);
shape_getter!(
    /// Prediction horizon (1 or 2).
    lexicast_model_horizon,
    h => h.model.shape.horizon
);
shape_getter!(
    /// Word-vector dimension the model was trained with.
    lexicast_model_embed_dim,
    h => h.model.shape.embed_dim
);
shape_getter!(
    /// Number of recurrent layers.
    lexicast_model_layer_count,
    h => h.model.shape.hidden_sizes.len()
);

/// Predicts successor words for a space-separated window of tokens.
/// On success `*out_json` receives a JSON array with one ranked
/// `[form, cosine]` list per horizon slot.
///
/// # Safety
/// `model` must be a live handle; `words` a nul-terminated string;
/// `out_json` writable pointer storage. Free the result with
/// [`lexicast_string_free`].
#[no_mangle]
pub unsafe extern "C" fn lexicast_model_predict(
    model: *const LexicastModel,
    words: *const c_char,
    k: usize,
    out_json: *mut *mut c_char,
) -> LexicastStatus {
    guard(|| {
        if model.is_null() {
            return null_arg("model");
        }
        if out_json.is_null() {
            return null_arg("out_json");
        }
        let words = match unsafe { cstr_arg(words, "words") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let handle = unsafe { &*model };
        let window: Vec<String> = words.split_whitespace().map(str::to_string).collect();
        match predict_word(&handle.model, &handle.table, &window, k) {
            Ok(ranked) => {
                let json = serde_json::to_string(&ranked).expect("plain data serializes");
                let cstring = CString::new(json).expect("JSON has no nul bytes");
                clear_error();
                unsafe { *out_json = cstring.into_raw() };
                LexicastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a string produced by this library. Null is a no-op.
///
/// # Safety
/// `s` must be a pointer this library handed out through an out-param
/// and not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn lexicast_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Computes the GDV of `n` points in `d` dimensions. `points` is
/// row-major n×d; `labels` holds one arbitrary class id per point.
///
/// # Safety
/// `points` must reference n·d doubles, `labels` n ids, and `out_gdv`
/// one writable double.
#[no_mangle]
pub unsafe extern "C" fn lexicast_gdv(
    points: *const f64,
    n: usize,
    d: usize,
    labels: *const u32,
    out_gdv: *mut f64,
) -> LexicastStatus {
    guard(|| {
        if points.is_null() {
            return null_arg("points");
        }
        if labels.is_null() {
            return null_arg("labels");
        }
        if out_gdv.is_null() {
            return null_arg("out_gdv");
        }
        if n == 0 || d == 0 {
            set_error("point cloud must be non-empty".into());
            return LexicastStatus::Config;
        }
        let raw_points = unsafe { std::slice::from_raw_parts(points, n * d) };
        let raw_labels = unsafe { std::slice::from_raw_parts(labels, n) };
        let cloud = match cloud_from_raw(raw_points, n, d, raw_labels) {
            Ok(cloud) => cloud,
            Err(e) => return fail(&e),
        };
        match gdv(&cloud) {
            Ok(value) => {
                clear_error();
                unsafe { *out_gdv = value };
                LexicastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Projects `n` points in `d` dimensions to the plane with classical
/// MDS. `out_coords` receives n (x, y) pairs, row-major.
///
/// # Safety
/// `points` must reference n·d doubles and `out_coords` 2·n writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn lexicast_mds2(
    points: *const f64,
    n: usize,
    d: usize,
    out_coords: *mut f64,
) -> LexicastStatus {
    guard(|| {
        if points.is_null() {
            return null_arg("points");
        }
        if out_coords.is_null() {
            return null_arg("out_coords");
        }
        if n == 0 || d == 0 {
            set_error("point cloud must be non-empty".into());
            return LexicastStatus::Config;
        }
        let raw = unsafe { std::slice::from_raw_parts(points, n * d) };
        let matrix = Array2::from_shape_vec((n, d), raw.to_vec()).expect("length checked");
        let dist = distance_matrix(&matrix);
        match mds_classical(&dist) {
            Ok(projection) => {
                clear_error();
                for i in 0..n {
                    unsafe {
                        *out_coords.add(2 * i) = projection.coords[(i, 0)];
                        *out_coords.add(2 * i + 1) = projection.coords[(i, 1)];
                    }
                }
                LexicastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Runs the full experiment pipeline described by a JSON config file.
///
/// # Safety
/// `config_path` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lexicast_run_experiment(config_path: *const c_char) -> LexicastStatus {
    guard(|| {
        let path = match unsafe { cstr_arg(config_path, "config_path") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let config = match ExperimentConfig::from_file(Path::new(path)) {
            Ok(config) => config,
            Err(e) => return fail(&e),
        };
        match run_experiment(&config) {
            Ok(_) => {
                clear_error();
                LexicastStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

fn cloud_from_raw(
    points: &[f64],
    n: usize,
    d: usize,
    labels: &[u32],
) -> Result<LabeledPointCloud, LexError> {
    for v in points {
        if !v.is_finite() {
            return Err(LexError::Contract("points contain non-finite values".into()));
        }
    }
    let mut distinct: Vec<u32> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let class_names: Vec<String> = distinct.iter().map(u32::to_string).collect();
    let dense = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("collected above") as u32)
        .collect();
    Ok(LabeledPointCloud {
        sample_ids: (0..n as u64).collect(),
        points: Array2::from_shape_vec((n, d), points.to_vec()).expect("length checked"),
        labels: dense,
        class_names,
    })
}
