use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use sfl::neuralnet::{build, predict_proba, save_model, FilterConfig, NetworkSpec, Topology};
use sfl::numerics::{Matrix, RngStream};
use sfl_ffi::*;

fn last_error() -> String {
    let p = sfl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn grid(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0);
    (0..rows * cols).map(|_| rng.gaussian(0.0, 1.0)).collect()
}

#[test]
fn reduce_matches_library() {
    let data = grid(30, 4, 1);
    let mut emb = ptr::null_mut();
    let status = unsafe { sfl_reduce(data.as_ptr(), 30, 4, SflMethod::Pca as u32, 2, 0, 0.0, 42, &mut emb) };
    assert_eq!(status, SflStatus::Ok);
    assert_eq!(unsafe { sfl_embedding_rows(emb) }, 30);
    assert_eq!(unsafe { sfl_embedding_cols(emb) }, 2);
    let mut coords = vec![0.0; 60];
    assert_eq!(unsafe { sfl_embedding_copy(emb, coords.as_mut_ptr(), 60) }, SflStatus::Ok);
    let x = Matrix::from_vec(30, 4, data).unwrap();
    let want = sfl::manifold::fit_pca(&x, 2).unwrap().coords;
    assert_eq!(coords, want.as_slice());

    let mut short = vec![0.0; 10];
    assert_eq!(unsafe { sfl_embedding_copy(emb, short.as_mut_ptr(), 10) }, SflStatus::InvalidArgument);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { sfl_embedding_diagnostics_json(emb, &mut json) }, SflStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"spectrum\""), "{text}");
    unsafe {
        sfl_string_free(json);
        sfl_embedding_free(emb);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let data = grid(10, 3, 2);
    let mut emb = ptr::null_mut();
    let status = unsafe { sfl_reduce(data.as_ptr(), 10, 3, SflMethod::Mds as u32, 5, 0, 0.0, 1, &mut emb) };
    assert_eq!(status, SflStatus::InvalidArgument);
    assert!(emb.is_null());
    assert!(last_error().contains("n_components"));

    let status = unsafe { sfl_reduce(ptr::null(), 10, 3, SflMethod::Pca as u32, 2, 0, 0.0, 1, &mut emb) };
    assert_eq!(status, SflStatus::NullPointer);

    let status = unsafe { sfl_reduce(data.as_ptr(), 10, 3, SflMethod::Pca as u32, 2, 0, 0.0, 1, ptr::null_mut()) };
    assert_eq!(status, SflStatus::NullPointer);

    let status = unsafe { sfl_reduce(data.as_ptr(), 10, 3, 99, 2, 0, 0.0, 1, &mut emb) };
    assert_eq!(status, SflStatus::InvalidArgument);
    assert!(last_error().contains("99"));

    let path = CString::new("/nonexistent/model.sfl").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { sfl_model_load(path.as_ptr(), &mut model) }, SflStatus::Io);
    assert!(model.is_null());

    let ok = unsafe { sfl_reduce(data.as_ptr(), 10, 3, SflMethod::Pca as u32, 2, 0, 0.0, 1, &mut emb) };
    assert_eq!(ok, SflStatus::Ok);
    assert!(sfl_last_error_message().is_null());
    unsafe { sfl_embedding_free(emb) };
}

#[test]
fn model_predicts_like_library() {
    let spec = NetworkSpec::standard(Topology::IntermediateFusion, &FilterConfig::default(), true, 20, 49).unwrap();
    let model = build(&spec, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.sfl");
    save_model(&path, &model).unwrap();

    let (bio, land) = (grid(4, 20, 3), grid(4, 49, 4));
    let want = predict_proba(
        &model,
        &Matrix::from_vec(4, 20, bio.clone()).unwrap(),
        &Matrix::from_vec(4, 49, land.clone()).unwrap(),
    )
    .unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { sfl_model_load(c_path.as_ptr(), &mut handle) }, SflStatus::Ok);
    assert_eq!(unsafe { sfl_model_n_params(handle) }, 82_099);
    let mut proba = vec![0.0; 12];
    let mut labels = vec![9u8; 4];
    let status = unsafe {
        sfl_model_predict(handle, bio.as_ptr(), 20, land.as_ptr(), 49, 4, proba.as_mut_ptr(), labels.as_mut_ptr())
    };
    assert_eq!(status, SflStatus::Ok);
    for (r, p) in want.iter().enumerate() {
        assert_eq!(&proba[3 * r..3 * r + 3], p.as_slice());
        assert_eq!(labels[r], sfl::neuralnet::argmax(p));
    }
    let bad = unsafe {
        sfl_model_predict(handle, bio.as_ptr(), 19, land.as_ptr(), 49, 4, proba.as_mut_ptr(), ptr::null_mut())
    };
    assert_eq!(bad, SflStatus::InvalidInput);
    unsafe { sfl_model_free(handle) };
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sfl.h")).unwrap();
    for name in [
        "sfl_reduce",
        "sfl_embedding_copy",
        "sfl_embedding_free",
        "sfl_model_load",
        "sfl_model_predict",
        "sfl_last_error_message",
        "SFL_STATUS_OK",
        "typedef struct SflEmbedding SflEmbedding",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"sfl.h\"\nint f(void) { SflEmbedding *e = 0; double x[4] = {0};\n\
         return (int)sfl_reduce(x, 2, 2, SFL_METHOD_PCA, 1, 0, 0.0, 1, &e); }\n",
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let Ok(out) = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler ({cc}); skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(sfl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
