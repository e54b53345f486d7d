use std::ffi::{CStr, CString};
use std::ptr;

use robust_proxy::domain::LayerMode;
use robust_proxy::nn::{Activation, MlpModel};
use robust_proxy::problems::{App, Dataset, GenConfig, Instance, KnapsackGenConfig, Standardizer};
use robust_proxy::training::TrainMode;
use robust_proxy::uncertainty::NormKind;
use robust_proxy::ProxyModel;
use robust_proxy_ffi::*;

fn dataset(app: App, norm: NormKind) -> Dataset {
    let cfg = KnapsackGenConfig { d_x: 6, m: 2, rho: 0.1, norm, count: 4, seed: 1 };
    Dataset::generate(&GenConfig::Knapsack { app, cfg }).unwrap()
}

fn lines(ds: &Dataset) -> Vec<CString> {
    let mut buf = Vec::new();
    ds.to_jsonl(&mut buf).unwrap();
    String::from_utf8(buf).unwrap().lines().map(|l| CString::new(l).unwrap()).collect()
}

fn saved_model(dir: &std::path::Path, ds: &Dataset) -> (ProxyModel, CString) {
    let std = Standardizer::fit(&ds.instances.iter().map(Instance::features).collect::<Vec<_>>()).unwrap();
    let model = ProxyModel {
        app: ds.app,
        mlp: MlpModel::new(&[std.dim(), 8, 6], Activation::Tanh, 2).unwrap(),
        standardizer: std,
        gamma: 0.1,
        nu: Some(10.0),
        mode: TrainMode::Ssl,
        train_config: None,
    };
    let path = dir.join("model.json");
    model.save(&path).unwrap();
    (model, CString::new(path.to_str().unwrap()).unwrap())
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rp_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn load_predict_free() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(App::KnapsackBin, NormKind::Box);
    let (model, path) = saved_model(tmp.path(), &ds);
    unsafe {
        let mut handle = ptr::null_mut();
        assert_eq!(rp_model_load(path.as_ptr(), &mut handle), RpStatus::RpOk);
        assert_eq!(rp_model_input_dim(handle), model.mlp.input_dim());
        assert_eq!(rp_model_output_dim(handle), 6);
        for (line, inst) in lines(&ds).iter().zip(&ds.instances) {
            let mut out = [f64::NAN; 6];
            let mut written = 0;
            let st = rp_model_predict_json(handle, line.as_ptr(), out.as_mut_ptr(), out.len(), &mut written);
            assert_eq!(st, RpStatus::RpOk, "{}", last_error());
            assert_eq!(written, 6);
            assert_eq!(out.to_vec(), model.decide(inst, LayerMode::Test).unwrap());
            assert_eq!(last_error(), "");
        }
        let mut small = [0.0; 2];
        let mut written = 0;
        let line = &lines(&ds)[0];
        let st = rp_model_predict_json(handle, line.as_ptr(), small.as_mut_ptr(), small.len(), &mut written);
        assert_eq!(st, RpStatus::RpBufferTooSmall);
        assert_eq!(written, 6);
        rp_model_free(handle);
        rp_model_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    unsafe {
        let mut handle = ptr::null_mut();
        assert_eq!(rp_model_load(ptr::null(), &mut handle), RpStatus::RpNullPointer);
        assert!(handle.is_null());
        let missing = CString::new(tmp.path().join("nope.json").to_str().unwrap()).unwrap();
        assert_eq!(rp_model_load(missing.as_ptr(), &mut handle), RpStatus::RpIo);
        assert!(!last_error().is_empty());

        let bad = tmp.path().join("bad.json");
        std::fs::write(&bad, "{\"format_version\": 7}").unwrap();
        let bad = CString::new(bad.to_str().unwrap()).unwrap();
        assert_eq!(rp_model_load(bad.as_ptr(), &mut handle), RpStatus::RpParse);
        assert!(last_error().contains("format_version"));

        let mut out = [0.0; 4];
        let junk = CString::new("not json").unwrap();
        assert_eq!(rp_model_predict_json(ptr::null(), junk.as_ptr(), out.as_mut_ptr(), 4, ptr::null_mut()), RpStatus::RpNullPointer);
        assert_eq!(rp_model_input_dim(ptr::null()), 0);
    }
}

#[test]
fn app_mismatch_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, path) = saved_model(tmp.path(), &dataset(App::KnapsackBin, NormKind::Box));
    let other = dataset(App::KnapsackCont, NormKind::Box);
    unsafe {
        let mut handle = ptr::null_mut();
        assert_eq!(rp_model_load(path.as_ptr(), &mut handle), RpStatus::RpOk);
        let mut out = [0.0; 6];
        let st = rp_model_predict_json(handle, lines(&other)[0].as_ptr(), out.as_mut_ptr(), 6, ptr::null_mut());
        assert_eq!(st, RpStatus::RpConfig);
        rp_model_free(handle);
    }
}

#[test]
fn solve_and_check_feasibility() {
    let ds = dataset(App::KnapsackCont, NormKind::Box);
    let line = &lines(&ds)[0];
    unsafe {
        let mut x = [0.0; 6];
        let (mut written, mut f_star) = (0, 0.0);
        assert_eq!(rp_instance_solve(line.as_ptr(), x.as_mut_ptr(), 6, &mut written, &mut f_star), RpStatus::RpOk);
        assert_eq!(written, 6);
        assert!(f_star > 0.0);
        let (mut viol, mut feasible) = (f64::NAN, false);
        assert_eq!(rp_instance_feasibility(line.as_ptr(), x.as_ptr(), 6, &mut viol, &mut feasible), RpStatus::RpOk);
        assert!(feasible);
        let ones = [1.0; 6];
        assert_eq!(rp_instance_feasibility(line.as_ptr(), ones.as_ptr(), 6, &mut viol, &mut feasible), RpStatus::RpOk);
        assert!(!feasible && viol > 0.0);
        assert_eq!(rp_instance_feasibility(line.as_ptr(), ones.as_ptr(), 3, &mut viol, &mut feasible), RpStatus::RpShape);
    }
    let ell = dataset(App::KnapsackCont, NormKind::Ellipsoid);
    unsafe {
        let mut x = [0.0; 6];
        let mut f_star = 0.0;
        let st = rp_instance_solve(lines(&ell)[0].as_ptr(), x.as_mut_ptr(), 6, ptr::null_mut(), &mut f_star);
        assert_eq!(st, RpStatus::RpUnsupported);
    }
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(rp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/robust_proxy.h")).unwrap();
    for name in ["rp_model_load", "rp_model_free", "rp_model_predict_json", "rp_instance_solve", "rp_last_error_message", "RP_OK", "typedef struct RpModel RpModel"] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
