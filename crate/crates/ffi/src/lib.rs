//! C interface to `dsf`.
//!
//! Objects are handed out as opaque pointers and released with the matching
//! `*_free` function. Every fallible call returns a [`DsfStatus`]; on failure
//! [`dsf_last_error_message`] describes the most recent error on the calling
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dsf::domination::{minimal_l0, z_walk_drift, z_walk_pmf, DominationParams};
use dsf::exploration::{run_until_regenerations, RegenerationRecord};
use dsf::successor::{iterate_path, successor_jump, PathRecord};
use dsf::{Environment, Error, Field, FieldParams, Vertex};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    SearchExhausted = 4,
    /// Records completed before the budget ran out are still returned.
    BudgetExhausted = 5,
    OutOfRange = 6,
    Internal = 7,
    Panic = 8,
}

/// A percolation field: dimension, open probability and seed.
pub struct DsfField(Field);

/// A path of successive successor vertices.
pub struct DsfPath(PathRecord);

/// Regeneration records of one joint run.
pub struct DsfRegenerations(Vec<RegenerationRecord>);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DsfRegeneration {
    pub index: u64,
    pub tau_steps: u64,
    pub t_time: i64,
    pub width: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DsfStatus {
    match e {
        Error::InvalidArgument(_) => DsfStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => DsfStatus::DimensionMismatch,
        Error::SearchExhausted { .. } => DsfStatus::SearchExhausted,
        Error::BudgetExhausted { .. } => DsfStatus::BudgetExhausted,
        _ => DsfStatus::Internal,
    }
}

struct Fail(DsfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DsfStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DsfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside dsf".into());
            DsfStatus::Panic
        }
    }
}

unsafe fn field_ref<'a>(field: *const DsfField) -> Result<&'a Field, Fail> {
    field.as_ref().map(|f| &f.0).ok_or_else(|| null("field"))
}

unsafe fn coords<'a>(ptr: *const i64, len: usize) -> Result<&'a [i64], Fail> {
    if ptr.is_null() {
        return Err(null("coordinate array"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_vertex(v: &Vertex, out: *mut i64, out_len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output array"));
    }
    if out_len < v.dim() {
        return Err(Fail(
            DsfStatus::OutOfRange,
            format!("output array holds {out_len} coordinates, need {}", v.dim()),
        ));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, v.dim());
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dsf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dsf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dsf_field_new(
    d: usize,
    p: f64,
    seed: u64,
    out: *mut *mut DsfField,
) -> DsfStatus {
    guard(|| {
        let params = FieldParams::new(d, p, seed)?;
        let handle = Box::into_raw(Box::new(DsfField(Field::new(params))));
        write_out(out, handle).inspect_err(|_| drop(Box::from_raw(handle)))
    })
}

/// # Safety
/// `field` must come from [`dsf_field_new`] and not be freed already. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dsf_field_free(field: *mut DsfField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Dimension of the field, or 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsf_field_dim(field: *const DsfField) -> usize {
    field.as_ref().map_or(0, |f| f.0.params().d)
}

/// # Safety
/// `coords` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsf_field_uniform(
    field: *const DsfField,
    coords_ptr: *const i64,
    len: usize,
    out: *mut f64,
) -> DsfStatus {
    guard(|| {
        let u = field_ref(field)?.uniform_at(coords(coords_ptr, len)?)?;
        write_out(out, u)
    })
}

/// # Safety
/// As for [`dsf_field_uniform`].
#[no_mangle]
pub unsafe extern "C" fn dsf_field_is_open(
    field: *const DsfField,
    coords_ptr: *const i64,
    len: usize,
    out: *mut bool,
) -> DsfStatus {
    guard(|| {
        let open = field_ref(field)?.is_open(coords(coords_ptr, len)?)?;
        write_out(out, open)
    })
}

/// Successor of a vertex. Writes its `d` coordinates to `out` and the L1
/// length of the jump to `out_radius` (which may be null).
///
/// # Safety
/// `coords` must hold `len` values and `out` must have room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn dsf_successor(
    field: *const DsfField,
    coords_ptr: *const i64,
    len: usize,
    out: *mut i64,
    out_len: usize,
    out_radius: *mut u64,
) -> DsfStatus {
    guard(|| {
        let jump = successor_jump(field_ref(field)?, coords(coords_ptr, len)?)?;
        write_vertex(&jump.to, out, out_len)?;
        if !out_radius.is_null() {
            out_radius.write(jump.radius);
        }
        Ok(())
    })
}

/// Follows `steps` successor jumps from a vertex.
///
/// # Safety
/// `coords` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsf_path_new(
    field: *const DsfField,
    coords_ptr: *const i64,
    len: usize,
    steps: usize,
    out: *mut *mut DsfPath,
) -> DsfStatus {
    guard(|| {
        let env = field_ref(field)?;
        let start = coords(coords_ptr, len)?;
        env.params().check_vertex(start)?;
        let path = iterate_path(env, &Vertex::new(start), steps)?;
        let handle = Box::into_raw(Box::new(DsfPath(path)));
        write_out(out, handle).inspect_err(|_| drop(Box::from_raw(handle)))
    })
}

/// # Safety
/// `path` must come from [`dsf_path_new`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dsf_path_free(path: *mut DsfPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of vertices on the path including its start; 0 for null.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsf_path_len(path: *const DsfPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.steps.len())
}

/// # Safety
/// `path` must be a live handle and `out` must have room for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn dsf_path_vertex(
    path: *const DsfPath,
    index: usize,
    out: *mut i64,
    out_len: usize,
) -> DsfStatus {
    guard(|| {
        let p = &path.as_ref().ok_or_else(|| null("path"))?.0;
        let v = p.steps.get(index).ok_or_else(|| {
            Fail(
                DsfStatus::OutOfRange,
                format!("vertex {index} of {}", p.steps.len()),
            )
        })?;
        write_vertex(v, out, out_len)
    })
}

/// L1 length of jump `index`, from vertex `index` to vertex `index + 1`.
///
/// # Safety
/// `path` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsf_path_radius(
    path: *const DsfPath,
    index: usize,
    out: *mut u64,
) -> DsfStatus {
    guard(|| {
        let p = &path.as_ref().ok_or_else(|| null("path"))?.0;
        let r = *p.step_radii.get(index).ok_or_else(|| {
            Fail(
                DsfStatus::OutOfRange,
                format!("jump {index} of {}", p.step_radii.len()),
            )
        })?;
        write_out(out, r)
    })
}

/// Runs walkers from `n_walkers` starts (row-major, `d` coordinates each)
/// until `j_max` regenerations. On [`DsfStatus::BudgetExhausted`] the handle
/// is still written and holds the completed records.
///
/// # Safety
/// `starts` must hold `n_walkers * d` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsf_regenerations_run(
    field: *const DsfField,
    starts: *const i64,
    n_walkers: usize,
    j_max: u64,
    step_cap: u64,
    out: *mut *mut DsfRegenerations,
) -> DsfStatus {
    let mut partial_status = DsfStatus::Ok;
    let status = guard(|| {
        let env = field_ref(field)?;
        let d = env.params().d;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let flat = coords(
            starts,
            n_walkers
                .checked_mul(d)
                .ok_or_else(|| Fail(DsfStatus::InvalidArgument, "walker count overflows".into()))?,
        )?;
        let verts: Vec<Vertex> = flat.chunks(d).map(Vertex::new).collect();
        let records = match run_until_regenerations(env, &verts, j_max, step_cap) {
            Ok(r) => r,
            Err(Error::BudgetExhausted { step_cap, partial }) => {
                set_error(format!(
                    "step budget of {step_cap} exhausted after {} regenerations",
                    partial.len()
                ));
                partial_status = DsfStatus::BudgetExhausted;
                partial
            }
            Err(e) => return Err(e.into()),
        };
        out.write(Box::into_raw(Box::new(DsfRegenerations(records))));
        Ok(())
    });
    if status == DsfStatus::Ok {
        partial_status
    } else {
        status
    }
}

/// # Safety
/// `regs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsf_regenerations_len(regs: *const DsfRegenerations) -> usize {
    regs.as_ref().map_or(0, |r| r.0.len())
}

/// # Safety
/// `regs` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsf_regenerations_get(
    regs: *const DsfRegenerations,
    index: usize,
    out: *mut DsfRegeneration,
) -> DsfStatus {
    guard(|| {
        let r = &regs.as_ref().ok_or_else(|| null("regenerations"))?.0;
        let rec = r.get(index).ok_or_else(|| {
            Fail(
                DsfStatus::OutOfRange,
                format!("record {index} of {}", r.len()),
            )
        })?;
        write_out(
            out,
            DsfRegeneration {
                index: rec.index,
                tau_steps: rec.tau_steps,
                t_time: rec.t_time,
                width: rec.width,
            },
        )
    })
}

/// # Safety
/// `regs` must come from [`dsf_regenerations_run`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dsf_regenerations_free(regs: *mut DsfRegenerations) {
    if !regs.is_null() {
        drop(Box::from_raw(regs));
    }
}

/// Smallest threshold whose comparison walk drifts downward.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsf_minimal_l0(p: f64, out: *mut u64) -> DsfStatus {
    guard(|| write_out(out, minimal_l0(p)?))
}

/// Probability that one step of the comparison walk equals `k`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsf_z_walk_pmf(p: f64, l0: u64, k: i64, out: *mut f64) -> DsfStatus {
    guard(|| write_out(out, z_walk_pmf(&DominationParams::new(p, l0)?, k)))
}

/// Mean step of the comparison walk.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsf_z_walk_drift(p: f64, l0: u64, out: *mut f64) -> DsfStatus {
    guard(|| write_out(out, z_walk_drift(&DominationParams::new(p, l0)?)))
}
