//! C ABI for `permtest`.
//!
//! Conventions:
//! - Every function returns a `PtStatus`; results go through out-pointers.
//! - On failure, `pt_last_error_message` describes the error for the calling thread.
//! - Vectors are `double` arrays of length `n`.
//! - `z` is an `n x p` matrix stored column-major (`z[i + j * n]`).
//! - Permutation images and block labels are 0-based.
//! - Groups are opaque handles released with `pt_group_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use permtest::cpt::cpt_test;
use permtest::linalg::{Mat, Vector};
use permtest::optimizer::{build_optimized_group, OptimizerConfig, PartitionMode};
use permtest::palmrt::{sampled_palmrt, PalmrtConfig, PalmrtPlan, PalmrtResult, Sides, TiePolicy};
use permtest::perm::{full_cycle_group, left_shift_group, verify_group, BlockGroup, ExplicitGroup, Perm};
use permtest::rng::{stream_rng, Stream};
use permtest::sim::cpt_solution;
use permtest::weighted::{weighted_cpt_test, weighted_palmrt_test};
use permtest::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    InvalidGroup = 5,
    TooLarge = 6,
    XInSpanZ = 7,
    NoSolution = 8,
    Panic = 9,
}

impl From<&Error> for PtStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch(_) => PtStatus::DimensionMismatch,
            Error::NonFinite(_) => PtStatus::NonFinite,
            Error::InvalidPermutation(_)
            | Error::ClosureViolation(..)
            | Error::DuplicateElement(..)
            | Error::EmptyGroup
            | Error::BadBlocks(_) => PtStatus::InvalidGroup,
            Error::TooLarge(..) => PtStatus::TooLarge,
            Error::DegenerateResidual => PtStatus::XInSpanZ,
            Error::NoSolution => PtStatus::NoSolution,
            Error::InvalidInput(_) | Error::BadColumn(_) | Error::Parse(_) | Error::Io(_) => PtStatus::InvalidInput,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PtStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            PtStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PtStatus::Panic
        }
    }
}

unsafe fn read_slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn read_design(x: *const f64, z: *const f64, y: *const f64, n: usize, p: usize) -> Result<(Vector, Mat, Vector), Failure> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()).into());
    }
    let xs = read_slice(x, n, "x")?;
    let ys = read_slice(y, n, "y")?;
    let zs = read_slice(z, n * p, "z")?;
    Ok((Vector::from_column_slice(xs), Mat::from_column_slice(n, p, zs), Vector::from_column_slice(ys)))
}

/// Opaque permutation group: an explicit element list or a block product.
pub struct PtGroup {
    inner: GroupKind,
}

enum GroupKind {
    Explicit(ExplicitGroup),
    Blocks(BlockGroup),
}

impl PtGroup {
    fn n(&self) -> usize {
        match &self.inner {
            GroupKind::Explicit(g) => g.n(),
            GroupKind::Blocks(g) => g.n(),
        }
    }

    fn explicit(&self) -> Result<ExplicitGroup, Error> {
        match &self.inner {
            GroupKind::Explicit(g) => Ok(g.clone()),
            GroupKind::Blocks(g) => g.enumerate(),
        }
    }
}

fn emit_group(out: *mut *mut PtGroup, inner: GroupKind) -> Result<(), Failure> {
    // SAFETY: checked for null; the caller owns the slot.
    let slot = unsafe { out_ref(out, "out")? };
    *slot = Box::into_raw(Box::new(PtGroup { inner }));
    Ok(())
}

/// The `n` cyclic shifts of `0..n`.
#[no_mangle]
pub extern "C" fn pt_group_full_cycle(n: usize, out: *mut *mut PtGroup) -> PtStatus {
    guard(|| emit_group(out, GroupKind::Explicit(full_cycle_group(n)?)))
}

/// `k_plus_1` rotations of contiguous blocks; trailing indices stay fixed.
#[no_mangle]
pub extern "C" fn pt_group_left_shift(n: usize, k_plus_1: usize, out: *mut *mut PtGroup) -> PtStatus {
    guard(|| {
        if k_plus_1 == 0 {
            return Err(Error::InvalidInput("k_plus_1 must be positive".into()).into());
        }
        emit_group(out, GroupKind::Explicit(left_shift_group(n, k_plus_1 - 1)?))
    })
}

/// Explicit group from `count` permutations stored back to back in `images`
/// (`count * n` entries). Closure is verified.
///
/// # Safety
/// `images` must point to `count * n` readable values.
#[no_mangle]
pub unsafe extern "C" fn pt_group_from_perms(n: usize, count: usize, images: *const usize, out: *mut *mut PtGroup) -> PtStatus {
    guard(|| {
        let all = read_slice(images, n * count, "images")?;
        let perms = all.chunks(n.max(1)).take(count).map(|c| Perm::from_images(c.to_vec())).collect::<Result<Vec<_>, _>>()?;
        emit_group(out, GroupKind::Explicit(verify_group(n, perms)?))
    })
}

/// Block-product group; `labels[i]` names the block of index `i`.
///
/// # Safety
/// `labels` must point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn pt_group_from_labels(n: usize, labels: *const usize, out: *mut *mut PtGroup) -> PtStatus {
    guard(|| {
        let labels = read_slice(labels, n, "labels")?;
        let mut ids: Vec<usize> = labels.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let blocks = ids
            .iter()
            .map(|&l| (0..n).filter(|&i| labels[i] == l).collect())
            .collect();
        emit_group(out, GroupKind::Blocks(BlockGroup::new(n, blocks)?))
    })
}

/// Design-adaptive block group for `(x, z)`. `random_mode` selects random
/// binning instead of the contract partition.
///
/// # Safety
/// `x` must hold `n` values and `z` `n * p` values.
#[no_mangle]
pub unsafe extern "C" fn pt_group_optimized(
    x: *const f64,
    z: *const f64,
    n: usize,
    p: usize,
    random_mode: bool,
    seed: u64,
    out: *mut *mut PtGroup,
) -> PtStatus {
    guard(|| {
        let (x, z, _) = read_design(x, z, x, n, p)?;
        let mut cfg = OptimizerConfig::default();
        if random_mode {
            cfg.mode = PartitionMode::Random;
        }
        let (g, _, _) = build_optimized_group(&x, &z, &cfg, &mut stream_rng(seed, Stream::Partition, 0))?;
        emit_group(out, GroupKind::Blocks(g))
    })
}

/// Number of indices the group acts on; 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pt_group_n(g: *const PtGroup) -> usize {
    g.as_ref().map_or(0, PtGroup::n)
}

/// Group order, saturating at `UINT64_MAX`; 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pt_group_order(g: *const PtGroup) -> u64 {
    match g.as_ref().map(|g| &g.inner) {
        None => 0,
        Some(GroupKind::Explicit(e)) => e.order() as u64,
        Some(GroupKind::Blocks(b)) => u64::try_from(b.order()).unwrap_or(u64::MAX),
    }
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `g` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pt_group_free(g: *mut PtGroup) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// PALMRT statistics. For block groups the `phi` fields are Monte Carlo
/// estimates from `m_samples` draws and `k_plus_1` equals `m_samples`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PtPalmrtResult {
    pub phi: f64,
    pub phi_tie: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub reject: bool,
    pub k_plus_1: usize,
}

impl From<&PalmrtResult> for PtPalmrtResult {
    fn from(r: &PalmrtResult) -> Self {
        PtPalmrtResult { phi: r.phi, phi_tie: r.phi_tie, phi1: r.phi1, phi2: r.phi2, reject: r.reject, k_plus_1: r.k_plus_1 }
    }
}

/// PALMRT on an explicit group, or its sampled version on a block group.
///
/// # Safety
/// `x`, `y` must hold `n` values, `z` `n * p` values; `group` must be live.
#[no_mangle]
pub unsafe extern "C" fn pt_palmrt(
    x: *const f64,
    z: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    group: *const PtGroup,
    alpha: f64,
    two_sided: bool,
    half_ties: bool,
    m_samples: usize,
    seed: u64,
    out: *mut PtPalmrtResult,
) -> PtStatus {
    guard(|| {
        let (x, z, y) = read_design(x, z, y, n, p)?;
        let g = group.as_ref().ok_or(Failure::Null("group"))?;
        let out = out_ref(out, "out")?;
        let mut cfg = PalmrtConfig::new(alpha, if two_sided { Sides::Two } else { Sides::One })?;
        if half_ties {
            cfg.tie_policy = TiePolicy::Half;
        }
        let res = match &g.inner {
            GroupKind::Explicit(e) => PalmrtPlan::new(&x, &z, e)?.test(&y, &cfg)?,
            GroupKind::Blocks(b) => {
                if m_samples == 0 {
                    return Err(Error::InvalidInput("m_samples must be positive".into()).into());
                }
                sampled_palmrt(&x, &z, &y, b, m_samples, &cfg, &mut stream_rng(seed, Stream::Sampling, 0))?
            }
        };
        *out = PtPalmrtResult::from(&res);
        Ok(())
    })
}

/// Weighted PALMRT; `t_out` receives the weighted statistic.
///
/// # Safety
/// As [`pt_palmrt`]; block groups are enumerated.
#[no_mangle]
pub unsafe extern "C" fn pt_weighted_palmrt(
    x: *const f64,
    z: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    group: *const PtGroup,
    alpha: f64,
    w0: f64,
    t_out: *mut f64,
    out: *mut PtPalmrtResult,
) -> PtStatus {
    guard(|| {
        let (x, z, y) = read_design(x, z, y, n, p)?;
        let g = group.as_ref().ok_or(Failure::Null("group"))?.explicit()?;
        let t_out = out_ref(t_out, "t_out")?;
        let out = out_ref(out, "out")?;
        let res = weighted_palmrt_test(&x, &z, &y, &g, alpha, w0)?;
        *t_out = res.t;
        *out = PtPalmrtResult::from(&res.palmrt);
        Ok(())
    })
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PtCptResult {
    pub r0: f64,
    pub threshold: f64,
    pub delta: f64,
    pub reject: bool,
    pub k_plus_1: usize,
}

/// Conformal permutation test with the power-optimized direction. `w0 <= 0`
/// selects uniform weights. If `eta_out` is not NULL it receives `n` values.
///
/// # Safety
/// As [`pt_palmrt`]; `eta_out` must be NULL or hold `n` writable values.
#[no_mangle]
pub unsafe extern "C" fn pt_cpt(
    x: *const f64,
    z: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    group: *const PtGroup,
    alpha: f64,
    w0: f64,
    eta_out: *mut f64,
    out: *mut PtCptResult,
) -> PtStatus {
    guard(|| {
        let (x, z, y) = read_design(x, z, y, n, p)?;
        let g = group.as_ref().ok_or(Failure::Null("group"))?.explicit()?;
        let out = out_ref(out, "out")?;
        let sol = cpt_solution(&x, &z, &g)?;
        let res = if w0 > 0.0 { weighted_cpt_test(&y, &sol, &g, alpha, w0)? } else { cpt_test(&y, &sol, &g, alpha)? };
        if !eta_out.is_null() {
            slice::from_raw_parts_mut(eta_out, n).copy_from_slice(sol.eta_star.as_slice());
        }
        *out = PtCptResult {
            r0: res.r0,
            threshold: res.threshold,
            delta: sol.delta.unwrap_or(f64::NAN),
            reject: res.reject,
            k_plus_1: g.order(),
        };
        Ok(())
    })
}
