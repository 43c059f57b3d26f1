use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use eggs_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        eggs_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(eggs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn two_messages_one_hub_matches_exact() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(eggs_factor_graph_new(&mut g), EggsStatus::Ok);
        let (mut a, mut b, mut h) = (0, 0, 0);
        assert_eq!(eggs_factor_graph_add_message(g, 0.85, &mut a), EggsStatus::Ok);
        assert_eq!(eggs_factor_graph_add_message(g, 0.85, &mut b), EggsStatus::Ok);
        assert_eq!(eggs_factor_graph_add_hub(g, &mut h), EggsStatus::Ok);
        assert_eq!(eggs_factor_graph_connect(g, a, h, 0.1), EggsStatus::Ok);
        assert_eq!(eggs_factor_graph_connect(g, b, h, 0.1), EggsStatus::Ok);
        let (mut nv, mut nf) = (0, 0);
        assert_eq!(eggs_factor_graph_sizes(g, &mut nv, &mut nf), EggsStatus::Ok);
        assert_eq!((nv, nf), (3, 2));

        let mut bp = [0.0; 3];
        let mut exact = [0.0; 3];
        let mut converged = false;
        assert_eq!(eggs_factor_graph_bp(g, 0, 0.0, 0.0, bp.as_mut_ptr(), 3, &mut converged), EggsStatus::Ok);
        assert_eq!(eggs_factor_graph_exact(g, exact.as_mut_ptr(), 3), EggsStatus::Ok);
        assert!(converged);
        // hand enumeration over (a, b, hub)
        let phi = |x: usize, y: usize| if x == y { 0.9 } else { 0.1 };
        let prior = |x: usize| if x == 1 { 0.85 } else { 0.15 };
        let (mut z, mut pa) = (0.0, 0.0);
        for xa in 0..2 {
            for xb in 0..2 {
                for xh in 0..2 {
                    let w = prior(xa) * prior(xb) * 0.5 * phi(xa, xh) * phi(xb, xh);
                    z += w;
                    if xa == 1 {
                        pa += w;
                    }
                }
            }
        }
        assert!((exact[0] - pa / z).abs() < 1e-12);
        assert!((bp[0] - exact[0]).abs() < 1e-6 && bp[0] > 0.85);

        let mut small = [0.0; 2];
        assert_eq!(eggs_factor_graph_bp(g, 0, 0.0, 0.0, small.as_mut_ptr(), 2, ptr::null_mut()), EggsStatus::InvalidArgument);
        assert!(last_error().contains("3 needed"));
        eggs_factor_graph_free(g);
    }
}

#[test]
fn graph_argument_errors() {
    unsafe {
        let mut g = ptr::null_mut();
        eggs_factor_graph_new(&mut g);
        let mut i = 0;
        assert_eq!(eggs_factor_graph_add_message(g, 1.5, &mut i), EggsStatus::InvalidArgument);
        eggs_factor_graph_add_message(g, 0.5, &mut i);
        let mut h = 0;
        eggs_factor_graph_add_hub(g, &mut h);
        assert_eq!(eggs_factor_graph_connect(g, i, h, 0.5), EggsStatus::Config);
        assert!(!last_error().is_empty());
        assert_eq!(eggs_factor_graph_connect(g, i, h, 0.2), EggsStatus::Ok);
        assert!(last_error().is_empty());
        assert_eq!(eggs_factor_graph_add_hub(ptr::null_mut(), &mut h), EggsStatus::NullPointer);
        eggs_factor_graph_free(g);
        eggs_factor_graph_free(ptr::null_mut());
    }
}

#[test]
fn hinge_model_grounds_linearly_and_solves() {
    unsafe {
        let n = 100;
        let priors = vec![0.7; n];
        let members: Vec<usize> = (0..n).collect();
        let offsets = [0, n];
        let relations = [1u32];
        let mut m = ptr::null_mut();
        let st = eggs_hinge_model_new(
            priors.as_ptr(),
            n,
            members.as_ptr(),
            offsets.as_ptr(),
            relations.as_ptr(),
            1,
            1.0,
            1.0,
            1.0,
            2,
            &mut m,
        );
        assert_eq!(st, EggsStatus::Ok, "{}", last_error());
        let (mut nv, mut nh) = (0, 0);
        eggs_hinge_model_sizes(m, &mut nv, &mut nh);
        assert_eq!(nv, n + 1);
        assert_eq!(nh, 2 * n + 2 * n);

        let mut scores = vec![0.0; n];
        let (mut obj, mut conv) = (f64::NAN, false);
        assert_eq!(eggs_hinge_model_map(m, 0.0, 0, scores.as_mut_ptr(), n, &mut obj, &mut conv), EggsStatus::Ok);
        assert!(conv && obj.is_finite());
        assert!(scores.iter().all(|&s| (s - scores[0]).abs() < 1e-6 && s > 0.0 && s < 1.0));
        eggs_hinge_model_free(m);

        let bad_members = [5usize];
        let st = eggs_hinge_model_new(
            priors.as_ptr(),
            2,
            bad_members.as_ptr(),
            [0usize, 1].as_ptr(),
            relations.as_ptr(),
            1,
            1.0,
            1.0,
            1.0,
            2,
            &mut m,
        );
        assert_eq!(st, EggsStatus::InvalidArgument);
        let st = eggs_hinge_model_new(
            priors.as_ptr(),
            n,
            members.as_ptr(),
            offsets.as_ptr(),
            relations.as_ptr(),
            1,
            1.0,
            1.0,
            1.0,
            3,
            &mut m,
        );
        assert_eq!(st, EggsStatus::Config);
    }
}

#[test]
fn metrics() {
    unsafe {
        let s = [0.9, 0.8, 0.7];
        let l = [1u8, 0, 1];
        let mut ap = 0.0;
        assert_eq!(eggs_aupr(s.as_ptr(), l.as_ptr(), 3, &mut ap), EggsStatus::Ok);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        let mut auc = 0.0;
        assert_eq!(eggs_auroc(s.as_ptr(), l.as_ptr(), 3, &mut auc), EggsStatus::Ok);
        assert!((auc - 0.5).abs() < 1e-15);
        assert_eq!(eggs_aupr(s.as_ptr(), [1u8, 1, 1].as_ptr(), 3, &mut ap), EggsStatus::Metric);
        assert_eq!(eggs_aupr(s.as_ptr(), [2u8, 0, 1].as_ptr(), 3, &mut ap), EggsStatus::InvalidArgument);
        assert_eq!(eggs_aupr(ptr::null(), l.as_ptr(), 3, &mut ap), EggsStatus::NullPointer);
    }
}

#[test]
fn dataset_generate_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new("n_users = 50\nn_messages = 400\nn_campaigns = 4\nspam_prevalence = 0.1").unwrap();
    let msgs = CString::new(dir.path().join("m.jsonl").to_str().unwrap()).unwrap();
    let fol = CString::new(dir.path().join("f.tsv").to_str().unwrap()).unwrap();
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(eggs_dataset_generate(cfg.as_ptr(), &mut d), EggsStatus::Ok, "{}", last_error());
        let (mut n, mut s) = (0, 0);
        eggs_dataset_counts(d, &mut n, &mut s);
        assert_eq!((n, s), (400, 40));
        assert_eq!(eggs_dataset_save(d, msgs.as_ptr(), fol.as_ptr()), EggsStatus::Ok);
        eggs_dataset_free(d);

        let mut e = ptr::null_mut();
        assert_eq!(eggs_dataset_load(msgs.as_ptr(), fol.as_ptr(), &mut e), EggsStatus::Ok);
        let (mut n2, mut s2) = (0, 0);
        eggs_dataset_counts(e, &mut n2, &mut s2);
        assert_eq!((n2, s2), (400, 40));
        eggs_dataset_free(e);

        let bad = CString::new("n_messages = \"lots\"").unwrap();
        assert_eq!(eggs_dataset_generate(bad.as_ptr(), &mut d), EggsStatus::Config);
        let missing = CString::new(dir.path().join("nope.jsonl").to_str().unwrap()).unwrap();
        assert_eq!(eggs_dataset_load(missing.as_ptr(), ptr::null(), &mut d), EggsStatus::Io);
        assert!(last_error().contains("nope.jsonl"));
    }
}

#[test]
fn run_all_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg_path,
        "feature_mode = \"limited\"\n\
         [generator]\nn_users = 100\nn_messages = 1200\nn_campaigns = 6\nspam_prevalence = 0.1\n\
         [split]\nn_subsets = 2\n\
         [experiment]\nroster = [\"independent\", \"mrf\"]\n",
    )
    .unwrap();
    let c = CString::new(cfg_path.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(eggs_run_all(c.as_ptr(), out.as_ptr()), EggsStatus::Ok, "{}", last_error());
    }
    let report = std::fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(report.contains("Independent") && report.contains("MRF"));

    std::fs::write(&cfg_path, "schema_version = 9\n").unwrap();
    unsafe {
        assert_eq!(eggs_run_all(c.as_ptr(), out.as_ptr()), EggsStatus::Config);
    }
    assert!(last_error().contains("schema_version"));
}

fn target_dir() -> PathBuf {
    // tests/../../../target/<profile>
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

/// Compiles a C program against the generated header and links the static library.
#[test]
fn c_program_links_against_header() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libeggs_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or {} missing", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "eggs.h"
int main(void) {
    EggsFactorGraph *g = NULL;
    size_t a, b, h;
    double m[3];
    bool conv = false;
    if (eggs_factor_graph_new(&g) != EGGS_STATUS_OK) return 1;
    eggs_factor_graph_add_message(g, 0.85, &a);
    eggs_factor_graph_add_message(g, 0.85, &b);
    eggs_factor_graph_add_hub(g, &h);
    eggs_factor_graph_connect(g, a, h, 0.1);
    eggs_factor_graph_connect(g, b, h, 0.1);
    if (eggs_factor_graph_bp(g, 0, 0.0, 0.0, m, 3, &conv) != EGGS_STATUS_OK) return 2;
    eggs_factor_graph_free(g);
    if (!(m[0] > 0.85) || !conv) return 3;
    double s[2] = {0.2, 0.9};
    unsigned char l[2] = {0, 1};
    double ap = 0.0;
    if (eggs_aupr(s, l, 2, &ap) != EGGS_STATUS_OK || ap != 1.0) return 4;
    if (eggs_factor_graph_connect(NULL, 0, 0, 0.1) != EGGS_STATUS_NULL_POINTER) return 5;
    char buf[128];
    eggs_last_error_message(buf, sizeof buf);
    printf("%s|%.6f\n", buf, m[0]);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("graph is null|0.93"), "{text}");
}
