use std::ffi::{CStr, CString};
use std::ptr;

use okid_ffi::*;

fn last_error() -> String {
    let p = okid_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Impulse-like record from y(k) = 0.5 y(k-1) + u(k-1).
fn first_order_record(len: usize) -> (Vec<f64>, Vec<f64>) {
    let u: Vec<f64> = (0..len).map(|k| ((k * 7919) % 13) as f64 / 6.0 - 1.0).collect();
    let mut y = vec![0.0; len];
    for k in 1..len {
        y[k] = 0.5 * y[k - 1] + u[k - 1];
    }
    (u, y)
}

fn identified(order: usize) -> *mut OkidModel {
    let (u, y) = first_order_record(200);
    let mut data = ptr::null_mut();
    let st = unsafe { okid_dataset_new(u.as_ptr(), 1, y.as_ptr(), 1, u.len(), 10.0, &mut data) };
    assert_eq!(st, OkidStatus::Ok);
    let mut model = ptr::null_mut();
    let st = unsafe { okid_identify(data, 6, order, 0.0, &mut model) };
    assert_eq!(st, OkidStatus::Ok, "{}", last_error());
    unsafe { okid_dataset_free(data) };
    model
}

#[test]
fn identify_and_read_back_matrices() {
    let model = identified(1);
    let (mut n, mut m, mut q) = (0, 0, 0);
    assert_eq!(unsafe { okid_model_dims(model, &mut n, &mut m, &mut q) }, OkidStatus::Ok);
    assert_eq!((n, m, q), (1, 1, 1));

    let mut a = [0.0];
    assert_eq!(unsafe { okid_model_matrix(model, OkidMatrix::A, a.as_mut_ptr(), 1) }, OkidStatus::Ok);
    assert!((a[0] - 0.5).abs() < 1e-9, "{}", a[0]);

    let mut b = [0.0];
    let mut c = [0.0];
    unsafe {
        okid_model_matrix(model, OkidMatrix::B, b.as_mut_ptr(), 1);
        okid_model_matrix(model, OkidMatrix::C, c.as_mut_ptr(), 1);
    }
    assert!((b[0] * c[0] - 1.0).abs() < 1e-9);

    let mut rho = 0.0;
    assert_eq!(unsafe { okid_model_observer_spectral_radius(model, &mut rho) }, OkidStatus::Ok);
    assert!(rho < 1.0);
    unsafe { okid_model_free(model) };
}

#[test]
fn frequency_response_at_dc() {
    let model = identified(1);
    let f = [0.0, 2.5];
    let (mut re, mut im) = ([0.0; 2], [0.0; 2]);
    let st = unsafe { okid_frequency_response(model, f.as_ptr(), 2, 10.0, re.as_mut_ptr(), im.as_mut_ptr()) };
    assert_eq!(st, OkidStatus::Ok);
    // 1 / (z - 0.5) at z = 1 and z = j
    assert!((re[0] - 2.0).abs() < 1e-8 && im[0].abs() < 1e-8);
    assert!((re[1] + 0.4).abs() < 1e-8 && (im[1] + 0.8).abs() < 1e-8);
    unsafe { okid_model_free(model) };
}

#[test]
fn small_buffer_is_reported() {
    let model = identified(1);
    let mut count = 0;
    assert_eq!(unsafe { okid_model_singular_values(model, ptr::null_mut(), 0, &mut count) }, OkidStatus::Ok);
    assert_eq!(count, 3);
    let st = unsafe { okid_model_matrix(model, OkidMatrix::K, ptr::null_mut(), 0) };
    assert_eq!(st, OkidStatus::BufferTooSmall);
    assert!(last_error().contains("needs 1"));
    unsafe { okid_model_free(model) };
}

#[test]
fn json_round_trip() {
    let model = identified(1);
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { okid_model_to_json(model, &mut text) }, OkidStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { okid_model_from_json(text, &mut back) }, OkidStatus::Ok);
    let (mut a0, mut a1) = ([0.0], [0.0]);
    unsafe {
        okid_model_matrix(model, OkidMatrix::A, a0.as_mut_ptr(), 1);
        okid_model_matrix(back, OkidMatrix::A, a1.as_mut_ptr(), 1);
        okid_string_free(text);
        okid_model_free(back);
        okid_model_free(model);
    }
    assert_eq!(a0, a1);
}

#[test]
fn errors_carry_status_and_message() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { okid_identify(ptr::null(), 4, 1, 0.0, &mut model) }, OkidStatus::NullPointer);
    assert!(last_error().contains("data"));

    let (u, y) = first_order_record(5);
    let mut data = ptr::null_mut();
    unsafe { okid_dataset_new(u.as_ptr(), 1, y.as_ptr(), 1, 5, 1.0, &mut data) };
    assert_eq!(unsafe { okid_identify(data, 9, 1, 0.0, &mut model) }, OkidStatus::Horizon);
    assert!(last_error().contains("p = 9"));
    unsafe { okid_dataset_free(data) };

    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { okid_model_from_json(bad.as_ptr(), &mut model) }, OkidStatus::Parse);
    assert!(!okid_last_error().is_null());
}

#[test]
fn success_clears_the_last_error() {
    let mut model = ptr::null_mut();
    unsafe { okid_identify(ptr::null(), 4, 1, 0.0, &mut model) };
    let model = identified(1);
    assert!(okid_last_error().is_null());
    unsafe { okid_model_free(model) };
}

#[test]
fn header_declares_the_abi() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/okid.h")).unwrap();
    for name in [
        "okid_dataset_new",
        "okid_identify",
        "okid_model_matrix",
        "okid_frequency_response",
        "okid_last_error",
        "typedef struct OkidModel OkidModel;",
        "OKID_STATUS_BUFFER_TOO_SMALL = 7",
    ] {
        assert!(header.contains(name), "{name}");
    }
    let v = unsafe { CStr::from_ptr(okid_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
