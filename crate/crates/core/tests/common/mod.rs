#![allow(dead_code)]

use roughfbm::enhanced::{lift_linear, EnhancedPath};
use roughfbm::sampling::SampledPath;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    rule.iter().map(|&(x, w)| w * f(c + r * x)).sum::<f64>() * r
}

/// Composite Gauss rule on `[0, b]` with panels graded geometrically
/// (ratio `q`) towards a singularity at 0. The innermost `[0, b q^levels]`
/// is dropped.
pub fn graded_gauss<F: Fn(f64) -> f64>(f: F, b: f64, q: f64, levels: usize, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let mut hi = b;
    let mut parts = Vec::with_capacity(levels);
    for _ in 0..levels {
        let lo = hi * q;
        parts.push(panel(&f, lo, hi, &rule));
        hi = lo;
    }
    // Smallest panels first.
    parts.iter().rev().sum()
}

/// Uniform composite Gauss rule on `[a, b]`.
pub fn composite_gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| panel(&f, a + i as f64 * h, a + (i + 1) as f64 * h, &rule))
        .sum()
}

/// Linear lift of the path `f(t) - f(0)` sampled on the level-`level` grid.
pub fn lift_fn(level: u32, d: usize, f: impl Fn(f64, usize) -> f64) -> EnhancedPath {
    let n = 1usize << level;
    let vals = ndarray::Array2::from_shape_fn((n + 1, d), |(j, c)| f(j as f64 / n as f64, c) - f(0.0, c));
    lift_linear(&SampledPath::new(level, vals).unwrap())
}
