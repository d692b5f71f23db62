//! Globally adaptive Gauss–Kronrod quadrature with algebraic endpoint
//! substitutions.
//!
//! Every singular integrand in the kernel layer behaves like `|u - e|^alpha`
//! near a known endpoint `e`. Substituting `u = e + w^(1/(1+alpha))` turns
//! such an integrand into a bounded one, after which plain panel bisection
//! with a 7/15-point Gauss–Kronrod pair converges quickly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 0.0,
            max_panels: 100_000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = fc.abs() * WGK[7];
    let mut fv = [(0.0, 0.0); 7];
    for (j, &x) in XGK[..7].iter().enumerate() {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = (f1, f2);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    if !kronrod.is_finite() {
        return Err(Error::domain(format!(
            "non-finite integrand on panel [{a:e}, {b:e}]"
        )));
    }
    // QUADPACK-style error scaling.
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for (j, &(f1, f2)) in fv.iter().enumerate() {
        asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let asc = asc * half.abs();
    let abs_sum = abs_sum * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    let eps_floor = 50.0 * f64::EPSILON * abs_sum;
    if abs_sum > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && err < eps_floor {
        err = eps_floor;
    }
    Ok(Panel {
        a,
        b,
        value: kronrod * half,
        error: err,
    })
}

/// Adaptive integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            panels: 0,
        });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integration bounds must be finite"));
    }
    if b < a {
        let r = integrate(f, b, a, opts)?;
        return Ok(QuadResult {
            value: -r.value,
            ..r
        });
    }
    let first = gk15(&f, a, b)?;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut panels = 1;
    // Panels too narrow to split further; their error is roundoff-limited.
    let mut frozen: Vec<Panel> = Vec::new();
    while total_err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        let Some(worst) = heap.pop() else {
            break;
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b || (worst.b - worst.a) <= 8.0 * f64::EPSILON * mid.abs()
        {
            frozen.push(worst);
            continue;
        }
        if panels >= opts.max_panels {
            return Err(Error::NonConvergence {
                context: "adaptive quadrature panel budget",
                estimate: total,
                error: total_err,
                panels,
            });
        }
        let left = gk15(&f, worst.a, mid)?;
        let right = gk15(&f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        panels += 1;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of incremental updates.
    let value: f64 = heap.iter().chain(frozen.iter()).map(|p| p.value).sum();
    let error: f64 = heap.iter().chain(frozen.iter()).map(|p| p.error).sum();
    let tol = opts.abs_tol.max(opts.rel_tol * value.abs());
    if error > tol && error > 1e-8 * value.abs() {
        return Err(Error::NonConvergence {
            context: "adaptive quadrature roundoff",
            estimate: value,
            error,
            panels,
        });
    }
    Ok(QuadResult {
        value,
        error,
        panels,
    })
}

/// Integrate `f` over `[a, b]` when `f` behaves like `(u - a)^left` near
/// `a` and/or `(b - u)^right` near `b`. Exponents must exceed `-1`.
pub fn integrate_singular<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    left: Option<f64>,
    right: Option<f64>,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            panels: 0,
        });
    }
    if b < a {
        return Err(Error::domain("integrate_singular expects a < b"));
    }
    for alpha in [left, right].into_iter().flatten() {
        if !(alpha > -1.0) {
            return Err(Error::domain(format!(
                "endpoint exponent {alpha} is not integrable"
            )));
        }
    }
    match (left, right) {
        (None, None) => integrate(f, a, b, opts),
        (Some(al), None) => integrate_left(&f, a, b, al, opts),
        (None, Some(ar)) => integrate_right(&f, a, b, ar, opts),
        (Some(al), Some(ar)) => {
            let mid = 0.5 * (a + b);
            let l = integrate_left(&f, a, mid, al, opts)?;
            let r = integrate_right(&f, mid, b, ar, opts)?;
            Ok(QuadResult {
                value: l.value + r.value,
                error: l.error + r.error,
                panels: l.panels + r.panels,
            })
        }
    }
}

fn integrate_left<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    alpha: f64,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    let q = 1.0 / (1.0 + alpha);
    let upper = (b - a).powf(1.0 + alpha);
    integrate(
        |w: f64| {
            let u = w.powf(q);
            let x = a + u;
            if u == 0.0 || x == a {
                return 0.0;
            }
            f(x) * q * w.powf(q - 1.0)
        },
        0.0,
        upper,
        opts,
    )
}

fn integrate_right<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    alpha: f64,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    let q = 1.0 / (1.0 + alpha);
    let upper = (b - a).powf(1.0 + alpha);
    integrate(
        |w: f64| {
            let u = w.powf(q);
            let x = b - u;
            if u == 0.0 || x == b {
                return 0.0;
            }
            f(x) * q * w.powf(q - 1.0)
        },
        0.0,
        upper,
        opts,
    )
}

/// `∫_lo^hi f(u) du` for `1 <= lo < hi` via `u = e^v`; suited to
/// algebraically decaying tails.
pub fn integrate_log<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::domain("integrate_log expects 0 < lo <= hi"));
    }
    integrate(
        |v: f64| {
            let u = v.exp();
            f(u) * u
        },
        lo.ln(),
        hi.ln(),
        opts,
    )
}
