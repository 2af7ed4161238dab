use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use qfilt_ffi::*;

const SIGMA_MINUS: [f64; 8] = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
const HALF_SIGMA_X: [f64; 8] = [0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0];
const MIXED: [f64; 8] = [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0];
const SIGMA_Z: [f64; 8] = [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];

fn last_error() -> String {
    unsafe { CStr::from_ptr(qf_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn model() -> *mut QfModel {
    let mut m = ptr::null_mut();
    let status = unsafe { qf_model_new(2, HALF_SIGMA_X.as_ptr(), SIGMA_MINUS.as_ptr(), 1, &mut m) };
    assert_eq!(status, QfStatus::Ok, "{}", last_error());
    m
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(qf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn semigroup_decay_matches_closed_form() {
    let m = unsafe {
        let mut m = ptr::null_mut();
        let zero = [0.0; 8];
        assert_eq!(
            qf_model_new(2, zero.as_ptr(), SIGMA_MINUS.as_ptr(), 1, &mut m),
            QfStatus::Ok
        );
        m
    };
    let mut out = [0.0; 8];
    let t = 0.7;
    assert_eq!(
        unsafe { qf_semigroup_evolve(m, MIXED.as_ptr(), t, out.as_mut_ptr()) },
        QfStatus::Ok
    );
    let excited = 0.5 * (-t).exp();
    assert!((out[6] - excited).abs() < 1e-12);
    assert!((out[0] - (1.0 - excited)).abs() < 1e-12);
    unsafe { qf_model_free(m) };
}

#[test]
fn simulate_step_and_replay_agree() {
    let m = model();
    let mut record = ptr::null_mut();
    let status = unsafe {
        qf_simulate(
            m,
            QfScheme::Homodyne as u32,
            0.0,
            MIXED.as_ptr(),
            0.5,
            1e-3,
            9,
            &mut record,
        )
    };
    assert_eq!(status, QfStatus::Ok, "{}", last_error());
    let (mut steps, mut dt) = (0usize, 0.0);
    assert_eq!(unsafe { qf_record_info(record, &mut steps, &mut dt) }, QfStatus::Ok);
    assert_eq!(steps, 500);
    let mut dy = vec![0.0; steps];
    assert_eq!(
        unsafe { qf_record_increments(record, dy.as_mut_ptr(), dy.len()) },
        QfStatus::Ok
    );
    assert_eq!(
        unsafe { qf_record_increments(record, dy.as_mut_ptr(), 3) },
        QfStatus::InvalidArgument
    );

    let new_filter = |kind: QfFilterKind| {
        let mut f = ptr::null_mut();
        let s = unsafe { qf_filter_new(m, QfScheme::Homodyne as u32, 0.0, kind as u32, MIXED.as_ptr(), &mut f) };
        assert_eq!(s, QfStatus::Ok, "{}", last_error());
        f
    };
    let stepped = new_filter(QfFilterKind::Bks);
    for &x in &dy {
        assert_eq!(unsafe { qf_filter_step(stepped, x, dt) }, QfStatus::Ok);
    }
    let replayed = new_filter(QfFilterKind::Bks);
    assert_eq!(unsafe { qf_filter_run_record(replayed, record) }, QfStatus::Ok);
    let (mut a, mut b) = ([0.0; 8], [0.0; 8]);
    unsafe {
        qf_filter_state(stepped, a.as_mut_ptr());
        qf_filter_state(replayed, b.as_mut_ptr());
    }
    assert_eq!(a, b);
    assert!((a[0] + a[6] - 1.0).abs() < 1e-12);

    let zakai = new_filter(QfFilterKind::Zakai);
    assert_eq!(unsafe { qf_filter_run_record(zakai, record) }, QfStatus::Ok);
    let (mut zre, mut zim, mut bre, mut bim, mut lik) = (0.0, 0.0, 0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(
            qf_filter_expectation(zakai, SIGMA_Z.as_ptr(), &mut zre, &mut zim),
            QfStatus::Ok
        );
        assert_eq!(
            qf_filter_expectation(stepped, SIGMA_Z.as_ptr(), &mut bre, &mut bim),
            QfStatus::Ok
        );
        assert_eq!(qf_filter_likelihood(zakai, &mut lik), QfStatus::Ok);
    }
    assert!((zre - bre).abs() < 0.05, "{zre} vs {bre}");
    assert!(zim.abs() < 1e-12 && bim.abs() < 1e-12);
    assert!(lik > 0.0);

    let counting = {
        let mut f = ptr::null_mut();
        unsafe {
            qf_filter_new(
                m,
                QfScheme::Counting as u32,
                0.0,
                QfFilterKind::Bks as u32,
                MIXED.as_ptr(),
                &mut f,
            )
        };
        f
    };
    assert_eq!(
        unsafe { qf_filter_run_record(counting, record) },
        QfStatus::InvalidArgument
    );
    assert!(last_error().contains("scheme"));

    unsafe {
        qf_filter_free(stepped);
        qf_filter_free(replayed);
        qf_filter_free(zakai);
        qf_filter_free(counting);
        qf_record_free(record);
        qf_model_free(m);
    }
}

#[test]
fn record_files_round_trip() {
    let m = model();
    let mut record = ptr::null_mut();
    unsafe {
        qf_simulate(
            m,
            QfScheme::Counting as u32,
            0.0,
            MIXED.as_ptr(),
            1.0,
            1e-3,
            4,
            &mut record,
        )
    };
    assert!(!record.is_null());
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("r.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { qf_record_write(record, path.as_ptr()) }, QfStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { qf_record_read(path.as_ptr(), &mut back) }, QfStatus::Ok);
    let mut a = vec![0.0; 1000];
    let mut b = vec![0.0; 1000];
    unsafe {
        qf_record_increments(record, a.as_mut_ptr(), 1000);
        qf_record_increments(back, b.as_mut_ptr(), 1000);
    }
    assert_eq!(a, b);
    let missing = CString::new(dir.path().join("none.csv").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { qf_record_read(missing.as_ptr(), &mut none) }, QfStatus::Io);
    assert!(none.is_null());
    unsafe {
        qf_record_free(record);
        qf_record_free(back);
        qf_model_free(m);
    }
}

#[test]
fn bad_inputs_map_to_status_codes() {
    let mut m = ptr::null_mut();
    let not_hermitian = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let status = unsafe { qf_model_new(2, not_hermitian.as_ptr(), SIGMA_MINUS.as_ptr(), 1, &mut m) };
    assert_eq!(status, QfStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { qf_model_new(2, ptr::null(), SIGMA_MINUS.as_ptr(), 1, &mut m) },
        QfStatus::NullPointer
    );
    assert_eq!(unsafe { qf_model_dim(ptr::null(), &mut 0) }, QfStatus::NullPointer);

    let m = model();
    let mut f = ptr::null_mut();
    assert_eq!(
        unsafe { qf_filter_new(m, 7, 0.0, 0, MIXED.as_ptr(), &mut f) },
        QfStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { qf_filter_new(m, 2, -1.0, 0, MIXED.as_ptr(), &mut f) },
        QfStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { qf_filter_new(m, 0, 0.0, 1, MIXED.as_ptr(), &mut f) },
        QfStatus::Ok,
        "{}",
        last_error()
    );
    assert!(last_error().is_empty());
    assert_eq!(unsafe { qf_filter_step(f, 0.0, -1.0) }, QfStatus::InvalidArgument);
    // a jump from the ground state has zero rate
    let mut ground = ptr::null_mut();
    let g = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    unsafe { qf_filter_new(m, 1, 0.0, 1, g.as_ptr(), &mut ground) };
    assert_eq!(unsafe { qf_filter_step(ground, 1.0, 1e-3) }, QfStatus::Numerical);
    unsafe {
        qf_filter_free(f);
        qf_filter_free(ground);
        qf_model_free(m);
    }
}

#[test]
fn header_is_generated_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qfilt.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "qf_model_new",
        "qf_filter_step",
        "qf_simulate",
        "qf_last_error_message",
        "QF_STATUS_OK",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        return;
    };
    if !cc.status.success() {
        return;
    }
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
