//! Pointwise evaluation of the Volterra kernel and its auxiliary integrals.
//!
//! For `0 < s < t` the kernel reads
//!
//! ```text
//! H < 1/2:  K(t,s) = c (t-s)^{H-1/2} + s^{H-1/2} F1(t/s)
//! H > 1/2:  K(t,s) = c (H-1/2) s^{H-1/2} F2(t/s)
//! ```
//!
//! and vanishes for `s >= t`. Both `F1` and `F2` carry an algebraic
//! singularity at the origin of their integration variable which is removed
//! by substitution before adaptive quadrature.

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_log, integrate_singular, QuadOptions};

use super::model::{HurstModel, Regime};

/// `∫_0^{z-1} u^{H-3/2} (1 - (u+1)^{H-1/2}) du`, given `z - 1`.
pub(crate) fn f1_core(hurst: f64, zm1: f64, opts: &QuadOptions) -> Result<f64> {
    let hh = hurst - 0.5;
    let integrand = |u: f64| -> f64 { -u.powf(hurst - 1.5) * (hh * u.ln_1p()).exp_m1() };
    split_at_one(integrand, zm1, hh, opts)
}

/// `∫_0^{z-1} u^{H-3/2} (u+1)^{H-1/2} du`, given `z - 1`.
pub(crate) fn f2_core(hurst: f64, zm1: f64, opts: &QuadOptions) -> Result<f64> {
    let hh = hurst - 0.5;
    let integrand = |u: f64| -> f64 { u.powf(hurst - 1.5) * (hh * u.ln_1p()).exp() };
    split_at_one(integrand, zm1, hurst - 1.5, opts)
}

/// Integrate over `[0, upper]`: a singular head on `[0, min(1, upper)]`
/// and a log-substituted tail beyond 1.
fn split_at_one<F: Fn(f64) -> f64>(
    f: F,
    upper: f64,
    origin_exponent: f64,
    opts: &QuadOptions,
) -> Result<f64> {
    if upper <= 0.0 {
        return Ok(0.0);
    }
    let head_end = upper.min(1.0);
    let head = integrate_singular(&f, 0.0, head_end, Some(origin_exponent), None, opts)?.value;
    let tail = if upper > 1.0 {
        integrate_log(&f, 1.0, upper, opts)?.value
    } else {
        0.0
    };
    Ok(head + tail)
}

/// Kernel with `c_H = 1`. `s >= t` gives 0, `s <= 0 < t` gives `+inf`.
pub(crate) fn shape_kernel(hurst: f64, t: f64, s: f64, opts: &QuadOptions) -> Result<f64> {
    if s >= t {
        return Ok(0.0);
    }
    if s <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let hh = hurst - 0.5;
    let zm1 = (t - s) / s;
    if hurst < 0.5 {
        Ok((t - s).powf(hh) + s.powf(hh) * (-hh) * f1_core(hurst, zm1, opts)?)
    } else {
        Ok(hh * s.powf(hh) * f2_core(hurst, zm1, opts)?)
    }
}

/// `K(t,u) - c (t-u)^{H-1/2}`, with `c = 1`.
pub(crate) fn shape_remainder(hurst: f64, t: f64, u: f64, opts: &QuadOptions) -> Result<f64> {
    if u >= t {
        return Ok(0.0);
    }
    let hh = hurst - 0.5;
    if hurst < 0.5 {
        if u <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(u.powf(hh) * (-hh) * f1_core(hurst, (t - u) / u, opts)?)
    } else {
        Ok(shape_kernel(hurst, t, u, opts)? - (t - u).powf(hh))
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("{name} = {x} outside [0, 1]")));
    }
    Ok(())
}

/// `F1(z) = c_H (1/2 - H) ∫_0^{z-1} u^{H-3/2} (1 - (u+1)^{H-1/2}) du`, `z > 1`, `H < 1/2`.
pub fn eval_f1(z: f64, model: &HurstModel) -> Result<f64> {
    if model.regime() != Regime::Rough {
        return Err(Error::domain("F1 enters the kernel only for H < 1/2"));
    }
    if !(z > 1.0) {
        return Err(Error::domain(format!("F1 requires z > 1, got {z}")));
    }
    let core = f1_core(model.hurst(), z - 1.0, &model.outer_opts())?;
    Ok(model.c_h() * (-model.h_half()) * core)
}

/// `F2(z) = ∫_0^{z-1} u^{H-3/2} (u+1)^{H-1/2} du`, `z > 1`, `H > 1/2`.
pub fn eval_f2(z: f64, model: &HurstModel) -> Result<f64> {
    if model.regime() != Regime::Smooth {
        return Err(Error::domain("F2 enters the kernel only for H > 1/2"));
    }
    if !(z > 1.0) {
        return Err(Error::domain(format!("F2 requires z > 1, got {z}")));
    }
    f2_core(model.hurst(), z - 1.0, &model.outer_opts())
}

/// The Volterra kernel `K(t,s)` on `[0,1]^2`.
pub fn eval_k(t: f64, s: f64, model: &HurstModel) -> Result<f64> {
    check_unit("t", t)?;
    check_unit("s", s)?;
    Ok(model.c_h() * shape_kernel(model.hurst(), t, s, &model.inner_opts())?)
}

/// Closed-form `∂K/∂t (t,s) = c_H (H-1/2) (s/t)^{1/2-H} (t-s)^{H-3/2}` for `0 < s < t`.
pub fn eval_dkdt(t: f64, s: f64, model: &HurstModel) -> Result<f64> {
    if !(s > 0.0 && s < t) {
        return Err(Error::domain(format!(
            "dK/dt requires 0 < s < t, got t = {t}, s = {s}"
        )));
    }
    let hh = model.h_half();
    Ok(model.c_h() * hh * (s / t).powf(-hh) * (t - s).powf(hh - 1.0))
}

/// `∫_a^b K(t,u) du` for `0 <= a < b <= t`. The diagonal term
/// `c (t-u)^{H-1/2}` is integrated in closed form and only the smoother
/// remainder goes through quadrature.
pub fn kernel_integral(model: &HurstModel, t: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0 <= a && a <= b && b <= t) {
        return Err(Error::domain(format!(
            "kernel_integral requires 0 <= a <= b <= t, got a = {a}, b = {b}, t = {t}"
        )));
    }
    kernel_integral_with_gaps(model, t, a, b, t - a, t - b)
}

/// As [`kernel_integral`], with the gaps `t - a` and `t - b` supplied by the
/// caller so that intervals hugging the diagonal keep full relative accuracy.
pub(crate) fn kernel_integral_with_gaps(
    model: &HurstModel,
    t: f64,
    a: f64,
    b: f64,
    ta: f64,
    tb: f64,
) -> Result<f64> {
    if a == b || ta == tb {
        return Ok(0.0);
    }
    let h = model.hurst();
    let beta = h + 0.5;
    // (ta^β - tb^β)/β without cancellation for nearby a, b.
    let lead = ta.powf(beta) * -(beta * (-(ta - tb) / ta).ln_1p()).exp_m1() / beta;
    let inner = model.inner_opts();
    let left = (a == 0.0).then(|| model.origin_exponent());
    let right = (tb == 0.0).then_some(beta);
    // The remainder can change sign, so its tolerance is tied to the
    // closed-form part rather than to itself.
    let opts = QuadOptions {
        abs_tol: 1e-2 * model.quad_tol() * lead.abs(),
        ..model.outer_opts()
    };
    let rem = integrate_singular(
        |u| shape_remainder(h, t, u, &inner).unwrap_or(f64::NAN),
        a,
        b,
        left,
        right,
        &opts,
    )?;
    Ok(model.c_h() * (lead + rem.value))
}

/// `∫_0^t K(t,u)^2 du`, by direct quadrature.
pub fn kernel_norm_sq(model: &HurstModel, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("t = {t} outside (0, 1]")));
    }
    let h = model.hurst();
    let inner = model.inner_opts();
    let r = integrate_singular(
        |u| {
            let k = shape_kernel(h, t, u, &inner).unwrap_or(f64::NAN);
            k * k
        },
        0.0,
        t,
        Some(2.0 * model.origin_exponent()),
        Some(2.0 * h - 1.0),
        &model.outer_opts(),
    )?;
    Ok(model.c_h() * model.c_h() * r.value)
}

/// `∫_0^1 |K(t,u) - K(s,u)|^2 du` for `0 <= s < t <= 1`, by direct quadrature.
pub fn kernel_increment_norm_sq(model: &HurstModel, s: f64, t: f64) -> Result<f64> {
    if !(0.0 <= s && s <= t && t <= 1.0) {
        return Err(Error::domain(format!(
            "increment norm requires 0 <= s <= t <= 1, got s = {s}, t = {t}"
        )));
    }
    if s == t {
        return Ok(0.0);
    }
    if s == 0.0 {
        return kernel_norm_sq(model, t);
    }
    let h = model.hurst();
    let hh = h - 0.5;
    let inner = model.inner_opts();
    let opts = model.outer_opts();
    let left_alpha = match model.regime() {
        Regime::Rough => None,
        Regime::Smooth => Some(-2.0 * hh),
    };
    let right_alpha = match model.regime() {
        Regime::Rough => 2.0 * hh,
        Regime::Smooth => hh,
    };
    let before = integrate_singular(
        |u| {
            let d = shape_kernel(h, t, u, &inner).unwrap_or(f64::NAN)
                - shape_kernel(h, s, u, &inner).unwrap_or(f64::NAN);
            d * d
        },
        0.0,
        s,
        left_alpha,
        Some(right_alpha),
        &opts,
    )?;
    let after = integrate_singular(
        |u| {
            let k = shape_kernel(h, t, u, &inner).unwrap_or(f64::NAN);
            k * k
        },
        s,
        t,
        None,
        Some(2.0 * hh),
        &opts,
    )?;
    Ok(model.c_h() * model.c_h() * (before.value + after.value))
}

/// `K` through the `F1` representation regardless of regime. For `H > 1/2`
/// this must agree with the `F2` representation (integration by parts).
#[doc(hidden)]
pub fn eval_k_via_f1(t: f64, s: f64, model: &HurstModel) -> Result<f64> {
    if s >= t {
        return Ok(0.0);
    }
    let h = model.hurst();
    let hh = h - 0.5;
    let core = f1_core(h, (t - s) / s, &model.inner_opts())?;
    Ok(model.c_h() * ((t - s).powf(hh) + s.powf(hh) * (-hh) * core))
}

// Plain quadrature, used where no endpoint singularity is present.
#[allow(dead_code)]
pub(crate) fn plain(f: impl Fn(f64) -> f64, a: f64, b: f64, opts: &QuadOptions) -> Result<f64> {
    Ok(integrate(f, a, b, opts)?.value)
}
