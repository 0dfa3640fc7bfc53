use std::ffi::{CStr, CString};
use std::ptr;

use dgplan_ffi::*;

fn builtin(name: &str) -> *mut DgplanCase {
    let name = CString::new(name).unwrap();
    let mut case = ptr::null_mut();
    assert_eq!(unsafe { dgplan_case_builtin(name.as_ptr(), &mut case) }, DgplanStatus::Ok);
    assert!(!case.is_null());
    case
}

fn last_error() -> String {
    let p = dgplan_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn solve_builtin_feeder() {
    let case = builtin("builtin:ieee33");
    let mut n = 0;
    assert_eq!(unsafe { dgplan_case_bus_count(case, &mut n) }, DgplanStatus::Ok);
    assert_eq!(n, 33);

    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { dgplan_solve(case, 0.0, 0, &mut sol) }, DgplanStatus::Ok);
    let (mut p, mut q) = (0.0, 0.0);
    assert_eq!(unsafe { dgplan_solution_losses(sol, &mut p, &mut q) }, DgplanStatus::Ok);
    assert!((p - 0.211).abs() < 0.211 * 0.02);
    let (mut v, mut bus) = (0.0, 0);
    assert_eq!(unsafe { dgplan_solution_min_voltage(sol, &mut v, &mut bus) }, DgplanStatus::Ok);
    assert_eq!(bus, 18);

    let mut buf = [0.0; 33];
    let mut written = 0;
    let st = unsafe { dgplan_solution_voltages(sol, buf.as_mut_ptr(), 10, &mut written) };
    assert_eq!(st, DgplanStatus::BufferTooSmall);
    assert_eq!(written, 33);
    let st = unsafe { dgplan_solution_voltages(sol, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(st, DgplanStatus::Ok);
    assert_eq!(buf[17], v);

    unsafe {
        dgplan_solution_free(sol);
        dgplan_case_free(case);
    }
}

#[test]
fn evaluate_matches_added_dg_case() {
    let case = builtin("ieee33");
    let buses = [12usize, 30];
    let mw = [1.147, 1.239];
    let mut eval = DgplanEvaluation::default();
    let st = unsafe { dgplan_evaluate(case, buses.as_ptr(), mw.as_ptr(), 2, 0.95, 1.05, &mut eval) };
    assert_eq!(st, DgplanStatus::Ok);

    let mut with = ptr::null_mut();
    assert_eq!(
        unsafe { dgplan_case_with_dg(case, buses.as_ptr(), mw.as_ptr(), 2, &mut with) },
        DgplanStatus::Ok
    );
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { dgplan_solve(with, 1e-8, 50, &mut sol) }, DgplanStatus::Ok);
    let (mut p, mut q) = (0.0, 0.0);
    unsafe { dgplan_solution_losses(sol, &mut p, &mut q) };
    assert_eq!(p, eval.loss_mw);
    assert!(eval.loss_reduction_pct > 50.0);
    assert!(eval.within_band);

    unsafe {
        dgplan_solution_free(sol);
        dgplan_case_free(with);
        dgplan_case_free(case);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut case = ptr::null_mut();
    let bad = CString::new("ieee118").unwrap();
    assert_eq!(
        unsafe { dgplan_case_builtin(bad.as_ptr(), &mut case) },
        DgplanStatus::InvalidArgument
    );
    assert!(last_error().contains("ieee118"));

    let text = CString::new("mpc.baseMVA = 10;").unwrap();
    assert_eq!(unsafe { dgplan_case_parse(text.as_ptr(), &mut case) }, DgplanStatus::ParseError);
    assert!(case.is_null());

    assert_eq!(
        unsafe { dgplan_case_builtin(ptr::null(), &mut case) },
        DgplanStatus::NullPointer
    );

    let feeder = builtin("ieee33");
    let mut eval = DgplanEvaluation::default();
    let (buses, mw) = ([1usize], [1.0]);
    let st = unsafe { dgplan_evaluate(feeder, buses.as_ptr(), mw.as_ptr(), 1, 0.95, 1.05, &mut eval) };
    assert_eq!(st, DgplanStatus::InvalidDg);
    assert!(last_error().contains("slack"));

    // a successful call clears the message
    let mut n = 0;
    unsafe { dgplan_case_bus_count(feeder, &mut n) };
    assert!(dgplan_last_error().is_null());
    unsafe { dgplan_case_free(feeder) };
}

#[test]
fn free_accepts_null() {
    unsafe {
        dgplan_case_free(ptr::null_mut());
        dgplan_solution_free(ptr::null_mut());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(dgplan_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dgplan.h")).unwrap();
    for name in [
        "dgplan_case_builtin",
        "dgplan_case_parse",
        "dgplan_solve",
        "dgplan_evaluate",
        "dgplan_last_error",
        "DGPLAN_STATUS_NON_CONVERGENCE",
        "typedef struct DgplanCase DgplanCase",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"dgplan.h\"\n\
         int main(void) {\n\
           DgplanCase *c = 0;\n\
           DgplanEvaluation e;\n\
           if (dgplan_case_builtin(\"ieee33\", &c) != DGPLAN_STATUS_OK) return 1;\n\
           dgplan_evaluate(c, 0, 0, 0, 0.95, 1.05, &e);\n\
           dgplan_case_free(c);\n\
           return 0;\n\
         }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(format!("-I{}/include", env!("CARGO_MANIFEST_DIR")))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
