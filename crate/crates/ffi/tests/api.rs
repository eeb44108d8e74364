use std::ffi::{CStr, CString};
use std::ptr;

use tumor_branching_ffi::*;

fn m3() -> *mut TbModel {
    let from = [1usize, 2, 2, 3, 1, 3];
    let to = [2usize, 3, 1, 2, 0, 0];
    let rate = [2.0, 2.0, 1.0, 3.0, 1.0, 1.0];
    let beta = [1.0; 3];
    let mut m = ptr::null_mut();
    let s = unsafe {
        tb_model_from_triples(
            from.as_ptr(),
            to.as_ptr(),
            rate.as_ptr(),
            6,
            3,
            TbTailPolicy::Kill as u32,
            beta.as_ptr(),
            &mut m,
        )
    };
    assert_eq!(s, TbStatus::Ok);
    m
}

fn last_error() -> String {
    let p = tb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn m3_kappa0_perron_extinction() {
    let m = m3();
    unsafe {
        assert_eq!(tb_model_size(m), 3);
        let mut k = TbKappa0::default();
        assert_eq!(tb_kappa0(m, 1e-10, &mut k), TbStatus::Ok);
        assert!((k.green - 1.8).abs() < 1e-12);
        let (mut lambda, mut nu, mut mu) = (0.0, [0.0; 3], [0.0; 3]);
        let s = tb_perron(
            m,
            TbMatrix::A as u32,
            1e-12,
            1_000_000,
            &mut lambda,
            nu.as_mut_ptr(),
            mu.as_mut_ptr(),
            3,
        );
        assert_eq!(s, TbStatus::Ok);
        assert!(lambda > 0.0);
        assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut q = [0.0; 3];
        assert_eq!(tb_extinction(m, 1e-12, 1_000_000, q.as_mut_ptr(), 3), TbStatus::Ok);
        assert!(q.iter().all(|&v| v > 0.0 && v < 1.0));
        let mut sv = TbSurvival::default();
        assert_eq!(tb_simulate(m, 1, 2.0, 50, 9, &mut sv), TbStatus::Ok);
        assert_eq!(sv.replicas, 50);
        assert!(sv.extinct <= 50);
        tb_model_free(m);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let m = m3();
    unsafe {
        let mut q = [0.0; 2];
        assert_eq!(
            tb_extinction(m, 1e-12, 1000, q.as_mut_ptr(), 2),
            TbStatus::BufferTooSmall
        );
        assert!(last_error().contains("need 3"));
        let mut lambda = 0.0;
        let s = tb_perron(m, 17, 1e-12, 1000, &mut lambda, ptr::null_mut(), ptr::null_mut(), 0);
        assert_eq!(s, TbStatus::InvalidArgument);
        let mut sv = TbSurvival::default();
        assert_eq!(tb_simulate(m, 4, 1.0, 1, 0, &mut sv), TbStatus::InvalidArgument);
        assert_eq!(
            tb_kappa0(ptr::null(), 1e-10, &mut TbKappa0::default()),
            TbStatus::NullPointer
        );
        // a later success clears the message
        assert_eq!(tb_model_size(m), 3);
        assert_eq!(tb_kappa0(m, 1e-10, &mut TbKappa0::default()), TbStatus::Ok);
        assert!(tb_last_error_message().is_null());
        tb_model_free(m);
        tb_model_free(ptr::null_mut());
    }
}

#[test]
fn config_errors_map_to_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    std::fs::write(
        &p,
        "[model]\nbuilder = \"single\"\ndeath = 1\nextra = 1\n[beta]\nfamily = \"constant\"\nkappa = 1\n",
    )
    .unwrap();
    let c = CString::new(p.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tb_model_from_config(c.as_ptr(), &mut m) }, TbStatus::Config);
    assert!(last_error().contains("extra"));
    std::fs::write(
        &p,
        "[model]\nbuilder = \"single\"\ndeath = 1\n[beta]\nfamily = \"constant\"\nkappa = 1\n",
    )
    .unwrap();
    assert_eq!(unsafe { tb_model_from_config(c.as_ptr(), &mut m) }, TbStatus::Ok);
    unsafe { tb_model_free(m) };
}

#[test]
fn gompertz_constructor_validates() {
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(
            tb_model_gompertz(1.0, 20.0, 30, 9, 0.1, 1.0, 20.0, &mut m),
            TbStatus::InvalidArgument
        );
        assert_eq!(
            tb_model_gompertz(-1.0, 20.0, 30, 0, 0.1, 1.0, 20.0, &mut m),
            TbStatus::InvalidArgument
        );
        assert_eq!(
            tb_model_gompertz(1.0, 20.0, 30, 1, 0.1, 1.0, 20.0, &mut m),
            TbStatus::Ok
        );
        assert_eq!(tb_model_size(m), 30);
        tb_model_free(m);
    }
}
