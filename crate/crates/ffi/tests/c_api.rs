use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use dsf::exploration::run_until_regenerations;
use dsf::successor::{iterate_path, successor_bruteforce};
use dsf::{Field, Vertex};
use dsf_ffi::*;

fn field(d: usize, p: f64, seed: u64) -> *mut DsfField {
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { dsf_field_new(d, p, seed, &mut f) }, DsfStatus::Ok);
    assert!(!f.is_null());
    f
}

fn last_error() -> String {
    let p = dsf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn field_queries_match_the_library() {
    let f = field(3, 0.3, 11);
    let lib = Field::from_parts(3, 0.3, 11).unwrap();
    unsafe {
        assert_eq!(dsf_field_dim(f), 3);
        for x in -3..3 {
            let v = [x, 2 * x, 5 - x];
            let mut u = -1.0;
            let mut open = false;
            assert_eq!(dsf_field_uniform(f, v.as_ptr(), 3, &mut u), DsfStatus::Ok);
            assert_eq!(
                dsf_field_is_open(f, v.as_ptr(), 3, &mut open),
                DsfStatus::Ok
            );
            assert_eq!(u, lib.uniform_at(&v).unwrap());
            assert_eq!(open, u < 0.3);
        }
        dsf_field_free(f);
    }
}

#[test]
fn successor_agrees_with_exhaustive_search() {
    let f = field(2, 0.5, 4);
    let lib = Field::from_parts(2, 0.5, 4).unwrap();
    unsafe {
        for x in -10i64..10 {
            let v = [x, x.rem_euclid(3)];
            let mut out = [0i64; 2];
            let mut radius = 0;
            assert_eq!(
                dsf_successor(f, v.as_ptr(), 2, out.as_mut_ptr(), 2, &mut radius),
                DsfStatus::Ok
            );
            let want = successor_bruteforce(&lib, &Vertex::new(&v), 50).unwrap();
            assert_eq!(&out[..], &want[..]);
            assert_eq!(radius, Vertex::new(&v).l1(&want));
        }
        dsf_field_free(f);
    }
}

#[test]
fn path_handle_exposes_every_step() {
    let f = field(2, 0.5, 8);
    let lib = Field::from_parts(2, 0.5, 8).unwrap();
    let start = [3i64, -2];
    let want = iterate_path(&lib, &Vertex::new(&start), 25).unwrap();
    unsafe {
        let mut path = ptr::null_mut();
        assert_eq!(
            dsf_path_new(f, start.as_ptr(), 2, 25, &mut path),
            DsfStatus::Ok
        );
        assert_eq!(dsf_path_len(path), 26);
        for i in 0..26 {
            let mut v = [0i64; 2];
            assert_eq!(dsf_path_vertex(path, i, v.as_mut_ptr(), 2), DsfStatus::Ok);
            assert_eq!(&v[..], &want.steps[i][..]);
        }
        for i in 0..25 {
            let mut r = 0;
            assert_eq!(dsf_path_radius(path, i, &mut r), DsfStatus::Ok);
            assert_eq!(r, want.step_radii[i]);
        }
        let mut v = [0i64; 2];
        assert_eq!(
            dsf_path_vertex(path, 26, v.as_mut_ptr(), 2),
            DsfStatus::OutOfRange
        );
        assert_eq!(
            dsf_path_vertex(path, 0, v.as_mut_ptr(), 1),
            DsfStatus::OutOfRange
        );
        dsf_path_free(path);
        dsf_field_free(f);
    }
}

#[test]
fn regenerations_round_trip() {
    let f = field(2, 0.5, 21);
    let lib = Field::from_parts(2, 0.5, 21).unwrap();
    let starts = [0i64, 0, 6, 0];
    let want = run_until_regenerations(
        &lib,
        &[Vertex::new(&starts[..2]), Vertex::new(&starts[2..])],
        4,
        1_000_000,
    )
    .unwrap();
    unsafe {
        let mut regs = ptr::null_mut();
        assert_eq!(
            dsf_regenerations_run(f, starts.as_ptr(), 2, 4, 1_000_000, &mut regs),
            DsfStatus::Ok
        );
        assert_eq!(dsf_regenerations_len(regs), 4);
        for (i, rec) in want.iter().enumerate() {
            let mut got = DsfRegeneration::default();
            assert_eq!(dsf_regenerations_get(regs, i, &mut got), DsfStatus::Ok);
            assert_eq!(
                (got.index, got.tau_steps, got.t_time, got.width),
                (rec.index, rec.tau_steps, rec.t_time, rec.width)
            );
        }
        dsf_regenerations_free(regs);

        // a budget of one step cannot finish; the handle still comes back
        let mut regs = ptr::null_mut();
        assert_eq!(
            dsf_regenerations_run(f, starts.as_ptr(), 2, 1000, 1, &mut regs),
            DsfStatus::BudgetExhausted
        );
        assert!(!regs.is_null());
        assert!(last_error().contains("budget"));
        dsf_regenerations_free(regs);
        dsf_field_free(f);
    }
}

#[test]
fn comparison_walk_functions() {
    unsafe {
        let mut l0 = 0;
        assert_eq!(dsf_minimal_l0(0.5, &mut l0), DsfStatus::Ok);
        let mut drift = 0.0;
        assert_eq!(dsf_z_walk_drift(0.5, l0, &mut drift), DsfStatus::Ok);
        assert!(drift < 0.0);
        let mut prev = 0.0;
        assert_eq!(dsf_z_walk_drift(0.5, l0 - 1, &mut prev), DsfStatus::Ok);
        assert!(prev >= 0.0);

        // the pmf sums to one and its mean is the drift
        let (mut total, mut mean) = (0.0, 0.0);
        for k in -(l0 as i64)..2000 {
            let mut q = 0.0;
            assert_eq!(dsf_z_walk_pmf(0.5, l0, k, &mut q), DsfStatus::Ok);
            assert!(q >= 0.0);
            total += q;
            mean += k as f64 * q;
        }
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        assert!((mean - drift).abs() < 1e-9, "{mean} vs {drift}");
    }
}

#[test]
fn errors_are_reported_not_raised() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(dsf_field_new(1, 0.5, 0, &mut f), DsfStatus::InvalidArgument);
        assert!(f.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(dsf_field_new(2, 1.5, 0, &mut f), DsfStatus::InvalidArgument);
        assert_eq!(
            dsf_field_new(2, 0.5, 0, ptr::null_mut()),
            DsfStatus::NullPointer
        );

        let f = field(2, 0.5, 0);
        let v = [0i64, 0, 0];
        let mut u = 0.0;
        assert_eq!(
            dsf_field_uniform(f, v.as_ptr(), 3, &mut u),
            DsfStatus::DimensionMismatch
        );
        assert_eq!(
            dsf_field_uniform(f, ptr::null(), 2, &mut u),
            DsfStatus::NullPointer
        );
        assert_eq!(
            dsf_field_uniform(ptr::null(), v.as_ptr(), 2, &mut u),
            DsfStatus::NullPointer
        );
        assert!(last_error().contains("null"));
        let mut q = 0.0;
        assert_eq!(
            dsf_z_walk_pmf(0.5, 0, 0, &mut q),
            DsfStatus::InvalidArgument
        );
        assert_eq!(dsf_path_len(ptr::null()), 0);
        dsf_field_free(f);
        dsf_field_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(dsf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_interface() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dsf.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "typedef struct DsfField DsfField",
        "typedef struct DsfPath DsfPath",
        "typedef struct DsfRegenerations DsfRegenerations",
        "DSF_STATUS_OK = 0",
        "DSF_STATUS_BUDGET_EXHAUSTED = 5",
        "dsf_field_new(",
        "dsf_field_free(",
        "dsf_field_uniform(",
        "dsf_field_is_open(",
        "dsf_successor(",
        "dsf_path_new(",
        "dsf_path_vertex(",
        "dsf_path_radius(",
        "dsf_regenerations_run(",
        "dsf_regenerations_get(",
        "dsf_minimal_l0(",
        "dsf_z_walk_pmf(",
        "dsf_z_walk_drift(",
        "dsf_last_error_message(",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }

    // the header must also parse as C when a compiler is around
    if let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    {
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
