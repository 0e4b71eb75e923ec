use std::ffi::{CStr, CString};
use std::ptr;

use bsc_ffi::*;

fn two_groups() -> (Vec<f64>, Vec<i64>) {
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for i in 0..200 {
        let g = (i % 2) as f64;
        let t = i as f64 * 0.618_033_988_7;
        data.push(g * 20.0 + (t.fract() - 0.5));
        data.push(((t * 7.0).fract() - 0.5) * 2.0);
        truth.push((i % 2) as i64);
    }
    (data, truth)
}

fn last_error() -> String {
    let p = bsc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn forest_round_trip() {
    let (data, _) = two_groups();
    let mut params = bsc_forest_params_default();
    params.m = 5;
    params.p = 20;
    let mut forest = ptr::null_mut();
    let st = unsafe { bsc_forest_fit(data.as_ptr(), 200, 2, &params, &mut forest) };
    assert_eq!(st, BscStatus::Ok);
    assert!(bsc_last_error().is_null());
    assert_eq!(unsafe { bsc_forest_dim(forest) }, 2);

    let mut vals = vec![0.0; 200];
    assert_eq!(unsafe { bsc_forest_eval(forest, data.as_ptr(), 200, 2, vals.as_mut_ptr()) }, BscStatus::Ok);
    assert!(vals.iter().all(|&v| v > 0.0));

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { bsc_forest_to_json(forest, &mut json) }, BscStatus::Ok);
    let mut copy = ptr::null_mut();
    assert_eq!(unsafe { bsc_forest_from_json(json, &mut copy) }, BscStatus::Ok);
    let mut again = vec![0.0; 200];
    assert_eq!(unsafe { bsc_forest_eval(copy, data.as_ptr(), 200, 2, again.as_mut_ptr()) }, BscStatus::Ok);
    assert_eq!(vals, again);

    let st = unsafe { bsc_forest_eval(forest, data.as_ptr(), 100, 4, again.as_mut_ptr()) };
    assert_eq!(st, BscStatus::InvalidInput);
    assert!(last_error().contains("dimension"));

    unsafe {
        bsc_string_free(json);
        bsc_forest_free(copy);
        bsc_forest_free(forest);
        bsc_forest_free(ptr::null_mut());
    }
}

#[test]
fn clustering_through_handles() {
    let (data, truth) = two_groups();
    let mut params = bsc_cluster_params_default();
    params.m = 10;
    params.r_ratio = 0.1;
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { bsc_cluster(data.as_ptr(), 200, 2, &params, &mut res) }, BscStatus::Ok);
    let n = unsafe { bsc_cluster_result_len(res) };
    assert_eq!(n, 200);
    assert_eq!(unsafe { bsc_cluster_result_n_clusters(res) }, 2);
    assert!(unsafe { bsc_cluster_result_rho_out(res) } > 0.0);
    let mut labels = vec![0i64; n];
    assert_eq!(unsafe { bsc_cluster_result_labels(res, labels.as_mut_ptr(), n) }, BscStatus::Ok);
    let mut score = 0.0;
    assert_eq!(unsafe { bsc_ari(labels.as_ptr(), truth.as_ptr(), n, &mut score) }, BscStatus::Ok);
    assert_eq!(score, 1.0);
    assert_eq!(
        unsafe { bsc_cluster_result_labels(res, labels.as_mut_ptr(), n - 1) },
        BscStatus::InvalidInput
    );
    unsafe { bsc_cluster_result_free(res) };
}

#[test]
fn error_codes() {
    let (data, _) = two_groups();
    let mut params = bsc_cluster_params_default();
    params.m = 5;
    params.k_c = 10_000;
    let mut res = ptr::null_mut();
    let st = unsafe { bsc_cluster(data.as_ptr(), 200, 2, &params, &mut res) };
    assert_eq!(st, BscStatus::NoValidLevel);
    assert!(res.is_null());
    assert!(last_error().contains("10000"));

    params.k_c = 2;
    params.mode = 7;
    assert_eq!(unsafe { bsc_cluster(data.as_ptr(), 200, 2, &params, &mut res) }, BscStatus::InvalidInput);
    assert_eq!(unsafe { bsc_cluster(ptr::null(), 200, 2, &params, &mut res) }, BscStatus::NullPointer);

    let fp = bsc_forest_params_default();
    let mut forest = ptr::null_mut();
    let bad = [f64::NAN, 0.0];
    assert_eq!(unsafe { bsc_forest_fit(bad.as_ptr(), 1, 2, &fp, &mut forest) }, BscStatus::InvalidInput);

    let mut out = 0.0;
    let a = [0i64, 1];
    assert_eq!(unsafe { bsc_ari(a.as_ptr(), ptr::null(), 2, &mut out) }, BscStatus::NullPointer);
    assert_eq!(unsafe { bsc_ari(ptr::null(), ptr::null(), 0, &mut out) }, BscStatus::Ok);
    assert_eq!(out, 1.0);

    let garbage = CString::new("{not json").unwrap();
    assert_eq!(unsafe { bsc_forest_from_json(garbage.as_ptr(), &mut forest) }, BscStatus::Format);
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/bsc.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in [
        "bsc_forest_fit",
        "bsc_forest_eval",
        "bsc_forest_free",
        "bsc_cluster",
        "bsc_cluster_result_labels",
        "bsc_cluster_result_free",
        "bsc_ari",
        "bsc_last_error",
        "typedef struct BscForest BscForest;",
    ] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; header syntax check skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"bsc.h\"\nint main(void) {\n  BscForestParams p = bsc_forest_params_default();\n  BscForest *f = 0;\n  double x[2] = {0, 1};\n  BscStatus s = bsc_forest_fit(x, 2, 1, &p, &f);\n  bsc_forest_free(f);\n  return s == BSC_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
