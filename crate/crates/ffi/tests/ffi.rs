//! Drives the C entry points the way a C caller would: raw pointers,
//! status codes and the thread-local error message.

use std::ffi::CStr;
use std::ptr;

use permtest::palmrt::{PalmrtConfig, PalmrtPlan, Sides};
use permtest::perm::left_shift_group;
use permtest::linalg::{Mat, Vector};
use permtest_ffi::*;

fn last_error() -> String {
    let p = pt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

/// Small deterministic design with `n = 12`, `p = 2`, stored column-major.
fn design() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = 12;
    let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
    let mut z = Vec::with_capacity(2 * n);
    z.extend((0..n).map(|i| (i as f64 * 0.37).sin()));
    z.extend((0..n).map(|i| ((i * 5) % 4) as f64));
    let y: Vec<f64> = (0..n).map(|i| 0.4 * x[i] + (i as f64 * 1.3).cos()).collect();
    (x, z, y)
}

fn left_shift(n: usize, k1: usize) -> *mut PtGroup {
    let mut g = ptr::null_mut();
    assert_eq!(pt_group_left_shift(n, k1, &mut g), PtStatus::Ok);
    g
}

#[test]
fn palmrt_matches_the_rust_api() {
    let (x, z, y) = design();
    let (n, p) = (12, 2);
    let g = left_shift(n, 4);
    let mut out = PtPalmrtResult::default();
    let st = unsafe { pt_palmrt(x.as_ptr(), z.as_ptr(), y.as_ptr(), n, p, g, 0.25, false, false, 0, 0, &mut out) };
    assert_eq!(st, PtStatus::Ok);

    let group = left_shift_group(n, 3).unwrap();
    let plan = PalmrtPlan::new(&Vector::from_vec(x), &Mat::from_vec(n, p, z), &group).unwrap();
    let want = plan.test(&Vector::from_vec(y), &PalmrtConfig::new(0.25, Sides::One).unwrap()).unwrap();
    assert_eq!(out.phi, want.phi);
    assert_eq!(out.phi_tie, want.phi_tie);
    assert_eq!(out.reject, want.reject);
    assert_eq!(out.k_plus_1, 4);
    unsafe { pt_group_free(g) };
}

#[test]
fn constant_target_gives_all_ties() {
    // X = 1 with Z = (e1, e2) under the full cycle on five points
    let x = [1.0; 5];
    let mut z = [0.0; 10];
    z[0] = 1.0;
    z[6] = 1.0;
    let y = [0.3, -0.2, 1.1, 0.4, -0.7];
    let mut g = ptr::null_mut();
    assert_eq!(pt_group_full_cycle(5, &mut g), PtStatus::Ok);
    assert_eq!(unsafe { pt_group_order(g) }, 5);
    let mut out = PtPalmrtResult::default();
    let st = unsafe { pt_palmrt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 5, 2, g, 0.5, false, true, 0, 0, &mut out) };
    assert_eq!(st, PtStatus::Ok);
    assert_eq!(out.phi, 1.0);
    assert!((out.phi_tie - 0.6).abs() < 1e-12);
    unsafe { pt_group_free(g) };
}

#[test]
fn sampled_palmrt_on_block_group_is_seeded() {
    let (x, z, y) = design();
    let labels: Vec<usize> = (0..12).map(|i| i / 4).collect();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { pt_group_from_labels(12, labels.as_ptr(), &mut g) }, PtStatus::Ok);
    assert_eq!(unsafe { pt_group_order(g) }, 24 * 24 * 24);
    let run = |seed| {
        let mut out = PtPalmrtResult::default();
        let st = unsafe { pt_palmrt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 12, 2, g, 0.1, true, false, 300, seed, &mut out) };
        assert_eq!(st, PtStatus::Ok);
        out
    };
    let (a, b) = (run(5), run(5));
    assert_eq!(a.phi1, b.phi1);
    assert_eq!(a.phi2, b.phi2);
    assert_eq!(a.k_plus_1, 300);
    let mut out = PtPalmrtResult::default();
    let st = unsafe { pt_palmrt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 12, 2, g, 0.1, true, false, 0, 5, &mut out) };
    assert_eq!(st, PtStatus::InvalidInput);
    unsafe { pt_group_free(g) };
}

#[test]
fn cpt_writes_a_feasible_direction() {
    let (x, z, y) = design();
    let g = left_shift(12, 3);
    let mut eta = vec![0.0; 12];
    let mut out = PtCptResult::default();
    let st = unsafe { pt_cpt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 12, 2, g, 0.2, 0.0, eta.as_mut_ptr(), &mut out) };
    assert_eq!(st, PtStatus::Ok, "{}", last_error());
    assert_eq!(out.k_plus_1, 3);
    let norm: f64 = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-9);
    // eta is orthogonal to Z
    for col in z.chunks(12) {
        let dot: f64 = col.iter().zip(&eta).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-8);
    }
    let st = unsafe { pt_cpt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 12, 2, g, 0.2, 0.5, ptr::null_mut(), &mut out) };
    assert_eq!(st, PtStatus::Ok);
    unsafe { pt_group_free(g) };
}

#[test]
fn weighted_palmrt_reports_statistic() {
    let (x, z, y) = design();
    let g = left_shift(12, 6);
    let mut t = f64::NAN;
    let mut out = PtPalmrtResult::default();
    let st = unsafe { pt_weighted_palmrt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 12, 2, g, 0.2, 0.3, &mut t, &mut out) };
    assert_eq!(st, PtStatus::Ok);
    assert!((0.0..=1.0).contains(&t));
    unsafe { pt_group_free(g) };
}

#[test]
fn null_pointers_are_rejected() {
    let (x, z, y) = design();
    let g = left_shift(12, 3);
    let mut out = PtPalmrtResult::default();
    let st = unsafe { pt_palmrt(ptr::null(), z.as_ptr(), y.as_ptr(), 12, 2, g, 0.1, false, false, 0, 0, &mut out) };
    assert_eq!(st, PtStatus::NullPointer);
    assert!(last_error().contains('x'));
    let st = unsafe { pt_palmrt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 12, 2, ptr::null(), 0.1, false, false, 0, 0, &mut out) };
    assert_eq!(st, PtStatus::NullPointer);
    let st = unsafe { pt_palmrt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 12, 2, g, 0.1, false, false, 0, 0, ptr::null_mut()) };
    assert_eq!(st, PtStatus::NullPointer);
    assert_eq!(pt_group_full_cycle(4, ptr::null_mut()), PtStatus::NullPointer);
    assert_eq!(unsafe { pt_group_n(ptr::null()) }, 0);
    unsafe { pt_group_free(ptr::null_mut()) };
    unsafe { pt_group_free(g) };
}

#[test]
fn invalid_inputs_map_to_status_codes() {
    let (x, z, y) = design();
    let g = left_shift(12, 3);
    let mut out = PtPalmrtResult::default();
    let st = unsafe { pt_palmrt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 12, 2, g, 1.5, false, false, 0, 0, &mut out) };
    assert_eq!(st, PtStatus::InvalidInput);
    assert!(!last_error().is_empty());

    let mut bad = y.clone();
    bad[3] = f64::NAN;
    let st = unsafe { pt_palmrt(x.as_ptr(), z.as_ptr(), bad.as_ptr(), 12, 2, g, 0.1, false, false, 0, 0, &mut out) };
    assert_eq!(st, PtStatus::NonFinite);

    let st = unsafe { pt_palmrt(x.as_ptr(), z.as_ptr(), y.as_ptr(), 8, 2, g, 0.1, false, false, 0, 0, &mut out) };
    assert_eq!(st, PtStatus::DimensionMismatch);

    // x equal to the first column of Z leaves no residual to optimize for
    let mut opt = ptr::null_mut();
    let st = unsafe { pt_group_optimized(z.as_ptr(), z.as_ptr(), 12, 2, false, 0, &mut opt) };
    assert_eq!(st, PtStatus::XInSpanZ);
    assert!(opt.is_null());
    unsafe { pt_group_free(g) };
}

#[test]
fn group_closure_is_checked() {
    let mut g = ptr::null_mut();
    let images = [0usize, 1, 2, 1, 2, 0];
    assert_eq!(unsafe { pt_group_from_perms(3, 2, images.as_ptr(), &mut g) }, PtStatus::InvalidGroup);
    assert!(g.is_null());
    assert!(last_error().to_lowercase().contains("clos"));

    let images = [0usize, 1, 2, 1, 2, 0, 2, 0, 1];
    assert_eq!(unsafe { pt_group_from_perms(3, 3, images.as_ptr(), &mut g) }, PtStatus::Ok);
    assert_eq!(unsafe { pt_group_order(g) }, 3);
    assert_eq!(unsafe { pt_group_n(g) }, 3);
    unsafe { pt_group_free(g) };

    let images = [0usize, 0, 2];
    assert_eq!(unsafe { pt_group_from_perms(3, 1, images.as_ptr(), &mut g) }, PtStatus::InvalidGroup);
}

#[test]
fn optimized_group_covers_all_indices() {
    let n = 60;
    let x: Vec<f64> = (0..n).map(|i| ((i * 13) % 17) as f64 / 17.0 - 0.5).collect();
    let z: Vec<f64> = (0..n).map(|i| (i as f64 * 0.21).cos()).collect();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { pt_group_optimized(x.as_ptr(), z.as_ptr(), n, 1, false, 3, &mut g) }, PtStatus::Ok);
    assert_eq!(unsafe { pt_group_n(g) }, n);
    assert!(unsafe { pt_group_order(g) } > 1);
    unsafe { pt_group_free(g) };
}

#[test]
fn version_and_header_are_published() {
    let v = unsafe { CStr::from_ptr(pt_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/permtest.h")).unwrap();
    for name in ["pt_palmrt", "pt_cpt", "pt_weighted_palmrt", "pt_group_free", "pt_last_error_message", "PtStatus", "PtGroup"] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
