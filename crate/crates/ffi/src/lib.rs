//! C ABI over the `expcon` decoder and command-line driver.
//!
//! Every fallible call returns an [`ExpconStatus`]; on failure the message is
//! available from [`expcon_last_error`] on the same thread. Panics never cross
//! the boundary: they are caught and reported as `EXPCON_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString, OsString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use expcon::eval::{evaluate, relabel};
use expcon::io::{format_examples, parse_file, Checkpoint, Schema};
use expcon::Error;

/// Result of an FFI call. Values 1 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpconStatus {
    Ok = 0,
    /// Bad configuration or usage.
    Config = 1,
    /// Unreadable or malformed input data, checkpoint or constraints.
    Data = 2,
    /// Optimization failed or produced non-finite values.
    Optimization = 3,
    /// Internal invariant violated.
    Invariant = 4,
    /// A required pointer argument was null.
    NullPointer = 5,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Opaque trained model. Create with `expcon_model_load`, release with
/// `expcon_model_free`.
pub struct ExpconModel {
    checkpoint: Checkpoint,
    label_names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    // Interior NULs would truncate the message; replace them.
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> ExpconStatus {
    match err.exit_code() {
        1 => ExpconStatus::Config,
        2 => ExpconStatus::Data,
        3 => ExpconStatus::Optimization,
        _ => ExpconStatus::Invariant,
    }
}

enum Failure {
    Status(ExpconStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ExpconStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExpconStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_last_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("panic: {msg}"));
            ExpconStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(ExpconStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::Status(ExpconStatus::InvalidUtf8, format!("{what} is not valid UTF-8"))
    })?;
    Ok(PathBuf::from(s))
}

fn load_examples(model: &ExpconModel, path: &Path) -> Result<Vec<expcon::model::Example>, Failure> {
    let ck = &model.checkpoint;
    let mut schema = Schema::frozen(ck.vocab.clone(), ck.labels.clone());
    Ok(parse_file(ck.task, path, &mut schema)?.examples)
}

/// Loads a checkpoint written by `expcon train`.
///
/// On success `*out` owns a new model; on failure it is set to null.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn expcon_model_load(
    path: *const c_char,
    out: *mut *mut ExpconModel,
) -> ExpconStatus {
    if out.is_null() {
        set_last_error("out is null".into());
        return ExpconStatus::NullPointer;
    }
    *out = ptr::null_mut();
    guard(|| {
        let path = path_arg(path, "path")?;
        let checkpoint = Checkpoint::load(&path)?;
        let label_names = (0..checkpoint.labels.len())
            .map(|y| {
                let name = checkpoint.labels.name(y).unwrap_or_default();
                CString::new(name).map_err(|_| {
                    Failure::Status(ExpconStatus::Data, format!("label {y} contains NUL"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        *out = Box::into_raw(Box::new(ExpconModel {
            checkpoint,
            label_names,
        }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or come from `expcon_model_load`, and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn expcon_model_free(model: *mut ExpconModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of labels, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn expcon_model_num_labels(model: *const ExpconModel) -> usize {
    model.as_ref().map_or(0, |m| m.label_names.len())
}

/// Name of label `index`, owned by the model; null when out of range.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn expcon_model_label_name(
    model: *const ExpconModel,
    index: usize,
) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.label_names.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Decodes every example in `input` and writes them with predicted labels
/// to `output`, in the same format the command-line `label` produces.
///
/// # Safety
/// `model` must be a live model; `input` and `output` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn expcon_model_label_file(
    model: *const ExpconModel,
    input: *const c_char,
    output: *const c_char,
) -> ExpconStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let input = path_arg(input, "input")?;
        let output = path_arg(output, "output")?;
        let examples = load_examples(m, &input)?;
        let decoded = relabel(&m.checkpoint.lambda, &examples)?;
        let ck = &m.checkpoint;
        let schema = Schema::frozen(ck.vocab.clone(), ck.labels.clone());
        std::fs::write(&output, format_examples(&decoded, &schema)).map_err(|e| Error::Io {
            path: output.clone(),
            source: e,
        })?;
        Ok(())
    })
}

/// Scores the model on the labeled examples in `data`.
///
/// # Safety
/// `model` must be a live model, `data` a NUL-terminated string, and
/// `accuracy` and `macro_f1` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn expcon_model_evaluate_file(
    model: *const ExpconModel,
    data: *const c_char,
    accuracy: *mut f64,
    macro_f1: *mut f64,
) -> ExpconStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if accuracy.is_null() {
            return Err(null("accuracy"));
        }
        if macro_f1.is_null() {
            return Err(null("macro_f1"));
        }
        let data = path_arg(data, "data")?;
        let examples = load_examples(m, &data)?;
        let report = evaluate(&m.checkpoint.lambda, &examples)?;
        *accuracy = report.accuracy;
        *macro_f1 = report.macro_f1;
        Ok(())
    })
}

/// Runs the command-line tool with `argv[0..argc]` and returns its exit
/// code. A caught panic returns `EXPCON_STATUS_PANIC`.
///
/// # Safety
/// `argv` must hold `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn expcon_cli_main(argc: c_int, argv: *const *const c_char) -> c_int {
    let mut args: Vec<OsString> = Vec::new();
    let status = guard(|| {
        if argc < 0 || (argc > 0 && argv.is_null()) {
            return Err(null("argv"));
        }
        for i in 0..argc as usize {
            let p = *argv.add(i);
            if p.is_null() {
                return Err(null("argv element"));
            }
            let s = CStr::from_ptr(p).to_str().map_err(|_| {
                Failure::Status(ExpconStatus::InvalidUtf8, format!("argv[{i}] is not valid UTF-8"))
            })?;
            args.push(s.into());
        }
        Ok(())
    });
    if status != ExpconStatus::Ok {
        return status as c_int;
    }
    match catch_unwind(|| expcon::cli::cli_main(args)) {
        Ok(code) => code,
        Err(_) => {
            set_last_error("panic in command-line driver".into());
            ExpconStatus::Panic as c_int
        }
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next FFI call on the same thread.
#[no_mangle]
pub extern "C" fn expcon_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn expcon_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
