//! C ABI over `roughfbm`.
//!
//! Every function returns an [`RfbmStatus`]; results go through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`rfbm_last_error_message`]. Handles are opaque and must be released with
//! the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use roughfbm::enhanced::{default_refinement_levels, level2_refined, lift_linear, EnhancedPath};
use roughfbm::grr::{compute_fg, GrrInputs};
use roughfbm::holder::modulus_distance;
use roughfbm::kernel::{
    calibrate_ch, eval_k, eval_km, l2_increment_error, l2_projection_error, HurstModel,
    HurstOptions, KernelPrimitive,
};
use roughfbm::sampling::{sample_brownian, DyadicIncrements, SampledPath, WmBatch};
use roughfbm::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfbmStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    NonConvergence = 3,
    DimensionMismatch = 4,
    LevelMismatch = 5,
    InvalidInput = 6,
    Invariant = 7,
    Config = 8,
    Format = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Calibrated Hurst model; the kernel primitive is built on first use.
pub struct RfbmModel {
    model: HurstModel,
    prim: OnceLock<KernelPrimitive>,
}

/// Brownian increments on a dyadic grid.
pub struct RfbmIncrements(DyadicIncrements);

/// Level-2 lift on a dyadic output grid.
pub struct RfbmPath(EnhancedPath);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RfbmStatus {
    match e {
        Error::Domain(_) => RfbmStatus::Domain,
        Error::NonConvergence { .. } => RfbmStatus::NonConvergence,
        Error::DimensionMismatch { .. } => RfbmStatus::DimensionMismatch,
        Error::LevelMismatch(_) => RfbmStatus::LevelMismatch,
        Error::InvalidInput(_) => RfbmStatus::InvalidInput,
        Error::Invariant(_) => RfbmStatus::Invariant,
        Error::Config { .. } => RfbmStatus::Config,
        Error::Format(_) => RfbmStatus::Format,
        Error::Io(_) => RfbmStatus::Io,
    }
}

struct Fail(RfbmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(RfbmStatus::NullPointer, format!("`{name}` is null"))
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> RfbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfbmStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RfbmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write<T>(p: *mut T, name: &str, v: T) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    p.write(v);
    Ok(())
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize, name: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    if len < needed {
        return Err(Fail(
            RfbmStatus::BufferTooSmall,
            format!("`{name}` holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

impl RfbmModel {
    fn primitive(&self) -> Result<&KernelPrimitive, Fail> {
        if let Some(p) = self.prim.get() {
            return Ok(p);
        }
        let p = KernelPrimitive::new(&self.model)?;
        Ok(self.prim.get_or_init(|| p))
    }
}

/// Length of the last error message on this thread, without the NUL.
#[no_mangle]
pub extern "C" fn rfbm_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copy the last error message (NUL-terminated, truncated to `len - 1`
/// bytes) and return its full length.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn rfbm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Calibrate `c_H` for `hurst`; `quad_tol <= 0` selects the default.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rfbm_model_new(
    hurst: f64,
    quad_tol: f64,
    allow_extended: bool,
    out: *mut *mut RfbmModel,
) -> RfbmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut opts = HurstOptions {
            allow_extended,
            ..HurstOptions::default()
        };
        if quad_tol > 0.0 {
            opts.quad_tol = quad_tol;
        }
        let model = calibrate_ch(hurst, opts)?;
        let h = Box::new(RfbmModel {
            model,
            prim: OnceLock::new(),
        });
        write(out, "out", Box::into_raw(h))
    })
}

/// # Safety
/// `model` must come from [`rfbm_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfbm_model_free(model: *mut RfbmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_model_c_h(model: *const RfbmModel, out: *mut f64) -> RfbmStatus {
    guard(|| write(out, "out", deref(model, "model")?.model.c_h()))
}

/// `K(t, s)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_kernel(model: *const RfbmModel, t: f64, s: f64, out: *mut f64) -> RfbmStatus {
    guard(|| write(out, "out", eval_k(t, s, &deref(model, "model")?.model)?))
}

/// `K_m(t, s)`, the dyadic projection of the kernel.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_kernel_projected(
    model: *const RfbmModel,
    m: u32,
    t: f64,
    s: f64,
    out: *mut f64,
) -> RfbmStatus {
    guard(|| write(out, "out", eval_km(m, t, s, &deref(model, "model")?.model)?))
}

/// `∫ |K(t,·) - K_m(t,·)|²`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_l2_projection_error(
    model: *const RfbmModel,
    t: f64,
    m: u32,
    out: *mut f64,
) -> RfbmStatus {
    guard(|| write(out, "out", l2_projection_error(t, m, &deref(model, "model")?.model)?))
}

/// `∫ |(K(t,·) - K(s,·)) - (K_m(t,·) - K_m(s,·))|²`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_l2_increment_error(
    model: *const RfbmModel,
    s: f64,
    t: f64,
    m: u32,
    out: *mut f64,
) -> RfbmStatus {
    guard(|| write(out, "out", l2_increment_error(s, t, m, &deref(model, "model")?.model)?))
}

/// Draw `2^m × d` Brownian increments from stream `(seed, stream_id)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rfbm_sample_brownian(
    m: u32,
    d: usize,
    seed: u64,
    stream_id: u64,
    out: *mut *mut RfbmIncrements,
) -> RfbmStatus {
    guard(|| {
        let inc = sample_brownian(m, d, seed, stream_id)?;
        write(out, "out", Box::into_raw(Box::new(RfbmIncrements(inc))))
    })
}

/// Wrap caller-provided increments, `2^m × d` row-major.
///
/// # Safety
/// `data` must hold `2^m · d` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_increments_from_data(
    m: u32,
    d: usize,
    data: *const f64,
    out: *mut *mut RfbmIncrements,
) -> RfbmStatus {
    guard(|| {
        if m > 30 {
            return Err(Error::Domain(format!("level m = {m} exceeds 30")).into());
        }
        let n = (1usize << m) * d;
        let v = in_slice(data, n, "data")?.to_vec();
        let deltas = ndarray::Array2::from_shape_vec((1usize << m, d), v)
            .map_err(|e| Fail(RfbmStatus::InvalidInput, e.to_string()))?;
        let inc = DyadicIncrements::from_deltas(m, deltas, 0, 0)?;
        write(out, "out", Box::into_raw(Box::new(RfbmIncrements(inc))))
    })
}

/// # Safety
/// `inc` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfbm_increments_free(inc: *mut RfbmIncrements) {
    if !inc.is_null() {
        drop(Box::from_raw(inc));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_increments_shape(inc: *const RfbmIncrements, m: *mut u32, d: *mut usize) -> RfbmStatus {
    guard(|| {
        let inc = &deref(inc, "inc")?.0;
        write(m, "m", inc.m())?;
        write(d, "d", inc.d())
    })
}

/// Copy the increments, `2^m × d` row-major, into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn rfbm_increments_copy(inc: *const RfbmIncrements, buf: *mut f64, len: usize) -> RfbmStatus {
    guard(|| {
        let inc = &deref(inc, "inc")?.0;
        let dst = out_slice(buf, len, inc.deltas().len(), "buf")?;
        for (o, v) in dst.iter_mut().zip(inc.deltas().iter()) {
            *o = *v;
        }
        Ok(())
    })
}

/// Block sums onto the coarser level `m`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_increments_coarsen(
    inc: *const RfbmIncrements,
    m: u32,
    out: *mut *mut RfbmIncrements,
) -> RfbmStatus {
    guard(|| {
        let c = deref(inc, "inc")?.0.coarsen(m)?;
        write(out, "out", Box::into_raw(Box::new(RfbmIncrements(c))))
    })
}

/// `W(m)` on the level-`level` grid: `(2^level + 1) × d` values, row-major.
///
/// # Safety
/// `buf` must be valid for `len` values; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_eval_wm(
    model: *const RfbmModel,
    inc: *const RfbmIncrements,
    level: u32,
    buf: *mut f64,
    len: usize,
) -> RfbmStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let inc = &deref(inc, "inc")?.0;
        let batch = WmBatch::new(model.primitive()?, level, std::slice::from_ref(inc))?;
        let path = batch.paths()?.pop().expect("one stream");
        let dst = out_slice(buf, len, path.values().len(), "buf")?;
        for (o, v) in dst.iter_mut().zip(path.values().iter()) {
            *o = *v;
        }
        Ok(())
    })
}

/// Level-2 lift of `W(m)` on the `output_level` grid, by refinement.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_lift_wm(
    model: *const RfbmModel,
    inc: *const RfbmIncrements,
    output_level: u32,
    out: *mut *mut RfbmPath,
) -> RfbmStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let inc = &deref(inc, "inc")?.0;
        let levels = default_refinement_levels(inc.m(), output_level);
        let (path, _) = level2_refined(inc, model.primitive()?, &levels, output_level)?;
        write(out, "out", Box::into_raw(Box::new(RfbmPath(path))))
    })
}

/// Linear lift of sampled values, `(2^level + 1) × d` row-major, first row zero.
///
/// # Safety
/// `values` must hold `(2^level + 1) · d` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_lift_linear(
    level: u32,
    d: usize,
    values: *const f64,
    out: *mut *mut RfbmPath,
) -> RfbmStatus {
    guard(|| {
        if level > 30 {
            return Err(Error::Domain(format!("grid level {level} exceeds 30")).into());
        }
        let rows = (1usize << level) + 1;
        let v = in_slice(values, rows * d, "values")?.to_vec();
        let arr = ndarray::Array2::from_shape_vec((rows, d), v)
            .map_err(|e| Fail(RfbmStatus::InvalidInput, e.to_string()))?;
        let path = lift_linear(&SampledPath::new(level, arr)?);
        write(out, "out", Box::into_raw(Box::new(RfbmPath(path))))
    })
}

/// # Safety
/// `path` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfbm_path_free(path: *mut RfbmPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Level-1 (`d`) and level-2 (`d²`, row-major) increment between grid
/// indices `i <= j`.
///
/// # Safety
/// `lvl1` must hold `d` values and `lvl2` `d²` values.
#[no_mangle]
pub unsafe extern "C" fn rfbm_path_increment(
    path: *const RfbmPath,
    i: usize,
    j: usize,
    lvl1: *mut f64,
    lvl2: *mut f64,
) -> RfbmStatus {
    guard(|| {
        let p = &deref(path, "path")?.0;
        let inc = p.increment_idx(i, j)?;
        let d = p.d();
        out_slice(lvl1, d, d, "lvl1")?.copy_from_slice(&inc.lvl1);
        out_slice(lvl2, d * d, d * d, "lvl2")?.copy_from_slice(&inc.lvl2);
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_path_shape(path: *const RfbmPath, level: *mut u32, d: *mut usize) -> RfbmStatus {
    guard(|| {
        let p = &deref(path, "path")?.0;
        write(level, "level", p.level())?;
        write(d, "d", p.d())
    })
}

/// Modulus distance over the pairs of the `grid_level` grid.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rfbm_modulus_distance(
    x: *const RfbmPath,
    y: *const RfbmPath,
    p: f64,
    grid_level: u32,
    out: *mut f64,
) -> RfbmStatus {
    guard(|| {
        let r = modulus_distance(&deref(x, "x")?.0, &deref(y, "y")?.0, p, grid_level)?;
        write(out, "out", r.value)
    })
}

/// `F_i` (`k - 1` values) and `G_i` (`k` values) from exponents `m[k]`,
/// `a[k - 1]` and `b[k]`, with `k = ⌊p⌋ ∧ 2`.
///
/// # Safety
/// Arrays must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rfbm_compute_fg(
    p: f64,
    k: usize,
    m: *const u32,
    a: *const f64,
    b: *const f64,
    f_out: *mut f64,
    g_out: *mut f64,
) -> RfbmStatus {
    guard(|| {
        if k == 0 {
            return Err(Fail(RfbmStatus::InvalidInput, "k must be at least 1".into()));
        }
        let inputs = GrrInputs::new(
            p,
            in_slice(m, k, "m")?.to_vec(),
            in_slice(a, k - 1, "a")?.to_vec(),
            in_slice(b, k, "b")?.to_vec(),
        )?;
        let fg = compute_fg(&inputs)?;
        if k > 1 {
            out_slice(f_out, k - 1, k - 1, "f_out")?.copy_from_slice(&fg.f);
        }
        out_slice(g_out, k, k, "g_out")?.copy_from_slice(&fg.g);
        Ok(())
    })
}
