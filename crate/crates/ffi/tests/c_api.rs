use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use uqgroup_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { uqg_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n < buf.len());
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn run(json: &str) -> (UqgStatus, *mut UqgReport) {
    let c = CString::new(json).unwrap();
    let mut rep = ptr::null_mut();
    let st = unsafe { uqg_run_json(c.as_ptr(), &mut rep) };
    (st, rep)
}

const ANALYTIC: &str = r#"{"problem":"analytic_g1","N":2,"S":[8,16],"n_max":200}"#;

#[test]
fn analytic_run_round_trip() {
    let (st, rep) = run(ANALYTIC);
    assert_eq!(st, UqgStatus::Ok, "{}", last_error());
    assert!(!rep.is_null());

    let mut reason = UqgStopReason::Aborted;
    assert_eq!(
        unsafe { uqg_report_stop_reason(rep, &mut reason) },
        UqgStatus::Ok
    );
    assert_eq!(reason, UqgStopReason::BudgetExhausted);

    let mut n = 0usize;
    assert_eq!(unsafe { uqg_report_n_samples(rep, &mut n) }, UqgStatus::Ok);
    assert!(n >= 200);
    let mut levels = 0usize;
    assert_eq!(
        unsafe { uqg_report_n_levels(rep, &mut levels) },
        UqgStatus::Ok
    );
    assert!(levels >= 2);

    let mut mean = f64::NAN;
    assert_eq!(
        unsafe { uqg_report_qoi_mean(rep, &mut mean) },
        UqgStatus::Ok
    );
    assert!(mean.is_finite());

    let sur = CString::new("sur").unwrap();
    let mut r = 0.0;
    assert_eq!(
        unsafe { uqg_report_r(rep, sur.as_ptr(), 8, &mut r) },
        UqgStatus::Ok
    );
    assert!((1.0..2.0).contains(&r));
    assert_eq!(
        unsafe { uqg_report_r(rep, sur.as_ptr(), 5, &mut r) },
        UqgStatus::NotFound
    );
    assert!(last_error().contains("S=5"));
    let bad = CString::new("xyz").unwrap();
    assert_eq!(
        unsafe { uqg_report_r(rep, bad.as_ptr(), 8, &mut r) },
        UqgStatus::Config
    );

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { uqg_report_to_json(rep, &mut json) }, UqgStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { uqg_string_free(json) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["stop_reason"], "budget_exhausted");

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().join("o").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { uqg_report_write(rep, out.as_ptr()) },
        UqgStatus::Ok
    );
    assert!(dir.path().join("o/summary.csv").exists());
    assert!(dir.path().join("o/levels.csv").exists());

    unsafe { uqg_report_free(rep) };
}

#[test]
fn errors_are_reported() {
    let (st, rep) = run("{not json");
    assert_eq!(st, UqgStatus::Json);
    assert!(rep.is_null());
    assert!(!last_error().is_empty());

    let (st, rep) = run(r#"{"problem":"analytic_g1","N":3,"S":4,"n_max":50}"#);
    assert_eq!(st, UqgStatus::Config);
    assert!(rep.is_null());

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { uqg_run_json(ptr::null(), &mut out) },
        UqgStatus::NullPointer
    );
    let c = CString::new(ANALYTIC).unwrap();
    assert_eq!(
        unsafe { uqg_run_json(c.as_ptr(), ptr::null_mut()) },
        UqgStatus::NullPointer
    );
    let mut n = 0usize;
    assert_eq!(
        unsafe { uqg_report_n_samples(ptr::null(), &mut n) },
        UqgStatus::NullPointer
    );

    // Success clears the previous message.
    let mut v = 0.0;
    let it = [1.0, 2.0];
    assert_eq!(
        unsafe { uqg_grouping_r(it.as_ptr(), 2, 2, false, &mut v) },
        UqgStatus::Ok
    );
    assert_eq!(unsafe { uqg_last_error_message(ptr::null_mut(), 0) }, 0);

    unsafe {
        uqg_report_free(ptr::null_mut());
        uqg_string_free(ptr::null_mut());
    }
}

#[test]
fn error_message_truncates() {
    let (st, _) = run("{not json");
    assert_eq!(st, UqgStatus::Json);
    let full = unsafe { uqg_last_error_message(ptr::null_mut(), 0) };
    assert!(full > 4);
    let mut buf = [1 as c_char; 4];
    assert_eq!(unsafe { uqg_last_error_message(buf.as_mut_ptr(), 4) }, full);
    assert_eq!(buf[3], 0);
}

#[test]
fn grouping_r_matches_hand_values() {
    // Natural chunks [1,10],[1,10]: 2*(10+10)/22. Sorted: [1,1],[10,10]: 2*11/22.
    let it = [1.0, 10.0, 1.0, 10.0];
    let mut r = 0.0;
    assert_eq!(
        unsafe { uqg_grouping_r(it.as_ptr(), 4, 2, false, &mut r) },
        UqgStatus::Ok
    );
    assert!((r - 40.0 / 22.0).abs() < 1e-15);
    assert_eq!(
        unsafe { uqg_grouping_r(it.as_ptr(), 4, 2, true, &mut r) },
        UqgStatus::Ok
    );
    assert!((r - 1.0).abs() < 1e-15);
    assert_eq!(
        unsafe { uqg_grouping_r(it.as_ptr(), 4, 0, true, &mut r) },
        UqgStatus::Config
    );
    assert_eq!(
        unsafe { uqg_grouping_r(ptr::null(), 4, 2, true, &mut r) },
        UqgStatus::NullPointer
    );
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(uqg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/uqgroup.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for sym in [
        "uqg_version",
        "uqg_last_error_message",
        "uqg_run_json",
        "uqg_report_free",
        "uqg_report_stop_reason",
        "uqg_report_n_samples",
        "uqg_report_n_levels",
        "uqg_report_qoi_mean",
        "uqg_report_r",
        "uqg_report_write",
        "uqg_report_to_json",
        "uqg_string_free",
        "uqg_grouping_r",
        "typedef struct UqgReport UqgReport",
        "UQG_STATUS_NOT_FOUND = 8",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        "#include \"uqgroup.h\"\nint main(void) { UqgReport *r = 0; (void)r; \
         return (int)UQG_STATUS_OK; }\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
