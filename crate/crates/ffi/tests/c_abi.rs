use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use expcon_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn run_cli(args: &[&str]) -> i32 {
    let owned: Vec<CString> = args.iter().map(|a| CString::new(*a).unwrap()).collect();
    let ptrs: Vec<*const c_char> = owned.iter().map(|c| c.as_ptr()).collect();
    unsafe { expcon_cli_main(ptrs.len() as i32, ptrs.as_ptr()) }
}

fn trained_model(dir: &Path) -> std::path::PathBuf {
    let d = dir.to_str().unwrap();
    let code = run_cli(&[
        "expcon", "synth", "--task", "clf", "--seed", "3", "--out-dir", d, "--labels", "3",
        "--labeled", "60", "--unlabeled", "20", "--test", "50",
    ]);
    assert_eq!(code, 0);
    let model = dir.join("model.txt");
    let code = run_cli(&[
        "expcon", "train", "--task", "clf", "--trainer", "sup",
        "--labeled", dir.join("labeled.txt").to_str().unwrap(),
        "--out", model.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    model
}

#[test]
fn load_label_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = trained_model(dir.path());

    let mut model = ptr::null_mut();
    let s = unsafe { expcon_model_load(cstr(&model_path).as_ptr(), &mut model) };
    assert_eq!(s, ExpconStatus::Ok);
    assert!(!model.is_null());
    assert!(expcon_last_error().is_null());

    let k = unsafe { expcon_model_num_labels(model) };
    assert_eq!(k, 3);
    for y in 0..k {
        let name = unsafe { CStr::from_ptr(expcon_model_label_name(model, y)) };
        assert!(!name.to_str().unwrap().is_empty());
    }
    assert!(unsafe { expcon_model_label_name(model, k) }.is_null());

    let test = dir.path().join("test.txt");
    let (mut acc, mut f1) = (f64::NAN, f64::NAN);
    let s = unsafe { expcon_model_evaluate_file(model, cstr(&test).as_ptr(), &mut acc, &mut f1) };
    assert_eq!(s, ExpconStatus::Ok);
    assert!((0.0..=1.0).contains(&acc) && (0.0..=1.0).contains(&f1));

    // Relabeled output scores perfectly against the model's own decodings.
    let labeled = dir.path().join("relabeled.txt");
    let s = unsafe { expcon_model_label_file(model, cstr(&test).as_ptr(), cstr(&labeled).as_ptr()) };
    assert_eq!(s, ExpconStatus::Ok);
    let (mut acc2, mut f2) = (0.0, 0.0);
    let s = unsafe { expcon_model_evaluate_file(model, cstr(&labeled).as_ptr(), &mut acc2, &mut f2) };
    assert_eq!(s, ExpconStatus::Ok);
    assert_eq!(acc2, 1.0);

    // Same numbers as the command-line evaluation.
    let report = dir.path().join("eval.txt");
    let code = run_cli(&[
        "expcon", "eval", "--model", model_path.to_str().unwrap(),
        "--data", test.to_str().unwrap(), "--out", report.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains(&format!("accuracy\t{acc:?}\n")));
    assert!(text.contains(&format!("macro_f1\t{f1:?}\n")));

    unsafe { expcon_model_free(model) };
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = cstr(&dir.path().join("absent.txt"));
    let mut model = ptr::null_mut();
    let s = unsafe { expcon_model_load(missing.as_ptr(), &mut model) };
    assert_eq!(s, ExpconStatus::Data);
    assert!(model.is_null());
    let msg = unsafe { CStr::from_ptr(expcon_last_error()) }.to_str().unwrap().to_owned();
    assert!(!msg.is_empty());

    let bad = b"\xff\xfe\0";
    let s = unsafe { expcon_model_load(bad.as_ptr().cast(), &mut model) };
    assert_eq!(s, ExpconStatus::InvalidUtf8);

    let s = unsafe { expcon_model_evaluate_file(ptr::null(), missing.as_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, ExpconStatus::NullPointer);

    assert_eq!(run_cli(&["expcon", "no-such-command"]), 1);
    unsafe { expcon_model_free(ptr::null_mut()) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("expcon.h"),
    )
    .unwrap();
    for name in [
        "expcon_model_load",
        "expcon_model_free",
        "expcon_model_num_labels",
        "expcon_model_label_name",
        "expcon_model_label_file",
        "expcon_model_evaluate_file",
        "expcon_cli_main",
        "expcon_last_error",
        "expcon_version",
        "typedef struct ExpconModel ExpconModel;",
        "EXPCON_STATUS_PANIC = 7",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let v = unsafe { CStr::from_ptr(expcon_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
