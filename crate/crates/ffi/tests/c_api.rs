use std::ffi::{CStr, CString};
use std::ptr;

use dp_kde_ffi::*;

fn last_error() -> String {
    let p = dp_kde_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn build_query_save_load() {
    let points = [0.1, 0.9];
    let mut handle = ptr::null_mut();
    let status = unsafe { dp_kde_build_l1(points.as_ptr(), 2, 1, 1.0, 1.0, false, 7, &mut handle) };
    assert_eq!(status, DpKdeStatus::Ok);
    assert_eq!(unsafe { dp_kde_dim(handle) }, 1);
    assert_eq!(unsafe { dp_kde_epsilon(handle) }, 1.0);

    let mut answer = f64::NAN;
    let y = [0.3];
    assert_eq!(
        unsafe { dp_kde_query(handle, y.as_ptr(), 1, &mut answer) },
        DpKdeStatus::Ok
    );
    assert!((answer - 0.6).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("s.txt").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { dp_kde_save(handle, path.as_ptr()) },
        DpKdeStatus::Ok
    );
    let mut loaded = ptr::null_mut();
    assert_eq!(
        unsafe { dp_kde_load(path.as_ptr(), &mut loaded) },
        DpKdeStatus::Ok
    );
    let mut again = f64::NAN;
    assert_eq!(
        unsafe { dp_kde_query(loaded, y.as_ptr(), 1, &mut again) },
        DpKdeStatus::Ok
    );
    assert_eq!(again.to_bits(), answer.to_bits());

    unsafe {
        dp_kde_free(handle);
        dp_kde_free(loaded);
    }
}

#[test]
fn noisy_answers_repeat() {
    let points: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
    let mut handle = ptr::null_mut();
    let status =
        unsafe { dp_kde_build_lpp(points.as_ptr(), 32, 2, 1.0, 2, 1.0, true, 3, &mut handle) };
    assert_eq!(status, DpKdeStatus::Ok);
    let y = [0.4, 0.2];
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(dp_kde_query(handle, y.as_ptr(), 2, &mut a), DpKdeStatus::Ok);
        assert_eq!(dp_kde_query(handle, y.as_ptr(), 2, &mut b), DpKdeStatus::Ok);
        dp_kde_free(handle);
    }
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn l2_handle() {
    let points: Vec<f64> = (0..30).map(|i| (i % 7) as f64 * 0.1).collect();
    let mut handle = ptr::null_mut();
    let status =
        unsafe { dp_kde_build_l2(points.as_ptr(), 10, 3, 0.5, 1.0, false, 1, &mut handle) };
    assert_eq!(status, DpKdeStatus::Ok);
    assert_eq!(unsafe { dp_kde_dim(handle) }, 3);
    let mut out = 0.0;
    let y = [0.1, 0.2, 0.3];
    assert_eq!(
        unsafe { dp_kde_query(handle, y.as_ptr(), 3, &mut out) },
        DpKdeStatus::Ok
    );
    assert!(out.is_finite());
    unsafe { dp_kde_free(handle) };
}

#[test]
fn error_codes() {
    let points = [0.1, 0.9];
    let mut handle = ptr::null_mut();
    unsafe {
        assert_eq!(
            dp_kde_build_l1(points.as_ptr(), 2, 1, 1.0, 1.0, false, 0, ptr::null_mut()),
            DpKdeStatus::NullPointer
        );
        assert_eq!(
            dp_kde_build_l1(points.as_ptr(), 2, 1, 1.0, -1.0, false, 0, &mut handle),
            DpKdeStatus::InvalidArgument
        );
        assert_eq!(
            dp_kde_build_lpp(points.as_ptr(), 2, 1, 1.0, 0, 1.0, false, 0, &mut handle),
            DpKdeStatus::InvalidArgument
        );
        assert!(last_error().contains('p'));
        assert_eq!(
            dp_kde_build_l1(points.as_ptr(), 2, 1, 1.0, 1.0, false, 0, &mut handle),
            DpKdeStatus::Ok
        );
        let mut out = 0.0;
        let far = [2.0];
        assert_eq!(
            dp_kde_query(handle, far.as_ptr(), 1, &mut out),
            DpKdeStatus::OutOfDomain
        );
        assert!(last_error().contains("outside"));
        let two = [0.1, 0.2];
        assert_eq!(
            dp_kde_query(handle, two.as_ptr(), 2, &mut out),
            DpKdeStatus::DimensionMismatch
        );
        assert_eq!(
            dp_kde_query(ptr::null(), far.as_ptr(), 1, &mut out),
            DpKdeStatus::NullPointer
        );
        dp_kde_free(handle);

        let missing = CString::new("/nonexistent/dir/s.txt").unwrap();
        assert_eq!(dp_kde_load(missing.as_ptr(), &mut handle), DpKdeStatus::Io);
        dp_kde_free(ptr::null_mut());
        assert_eq!(dp_kde_dim(ptr::null()), 0);
    }
}

#[test]
fn header_declares_api() {
    let header = include_str!("../include/dp_kde.h");
    for name in [
        "dp_kde_build_l1",
        "dp_kde_build_lpp",
        "dp_kde_build_l2",
        "dp_kde_load",
        "dp_kde_save",
        "dp_kde_query",
        "dp_kde_free",
        "dp_kde_last_error",
        "DP_KDE_STATUS_OUT_OF_DOMAIN",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
