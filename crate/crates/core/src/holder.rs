//! Modulus-type distances and Hölder moduli over all pairs of a dyadic grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::enhanced::{EnhancedPath, RoughIncrement};
use crate::error::{Error, Result};
use crate::kernel::dyadic_step;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulusResult {
    pub p: f64,
    pub grid_level: u32,
    pub value: f64,
    pub argmax_pair: (f64, f64),
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Max over pairs with a deterministic tie-break (earliest pair wins), so the
/// parallel reduction returns the same pair as a serial scan.
fn better(a: (f64, usize, usize), b: (f64, usize, usize)) -> (f64, usize, usize) {
    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

fn restrict_to(x: &EnhancedPath, grid_level: u32) -> Result<EnhancedPath> {
    if grid_level > x.level() {
        return Err(Error::LevelMismatch(format!(
            "grid level {grid_level} finer than path level {}",
            x.level()
        )));
    }
    x.restrict(grid_level)
}

/// Sup over grid pairs `s < t` of `g(X_{s,t}, Y_{s,t}, t - s)`.
fn sup_over_pairs<G>(x: &EnhancedPath, y: Option<&EnhancedPath>, g: G) -> (f64, usize, usize)
where
    G: Fn(&RoughIncrement, Option<&RoughIncrement>, f64) -> f64 + Sync,
{
    let n = x.intervals();
    let h = dyadic_step(x.level());
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0, usize::MAX, usize::MAX);
            let ys: Vec<RoughIncrement> = match y {
                Some(y) => {
                    let mut v = Vec::with_capacity(n - i);
                    y.for_each_from(i, |_, inc| v.push(inc.clone()));
                    v
                }
                None => Vec::new(),
            };
            x.for_each_from(i, |j, xi| {
                let yi = ys.get(j - i - 1);
                let val = g(xi, yi, (j - i) as f64 * h);
                best = better(best, (val, i, j));
            });
            best
        })
        .reduce(|| (0.0, usize::MAX, usize::MAX), better)
}

/// `d̃_p(X, Y) = max_{s<t} Σ_{i ≤ ⌊p⌋∧2} |X^{(i)}_{s,t} - Y^{(i)}_{s,t}| / (t-s)^{i/p}`
/// over the pairs of the level-`grid_level` grid.
pub fn modulus_distance(
    x: &EnhancedPath,
    y: &EnhancedPath,
    p: f64,
    grid_level: u32,
) -> Result<ModulusResult> {
    if !(p > 1.0 && p < 4.0) {
        return Err(Error::domain(format!("p = {p} outside (1, 4)")));
    }
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch {
            expected: x.d(),
            found: y.d(),
        });
    }
    let (xr, yr) = (restrict_to(x, grid_level)?, restrict_to(y, grid_level)?);
    let with_level2 = p >= 2.0;
    let (value, i, j) = sup_over_pairs(&xr, Some(&yr), |a, b, dt| {
        let b = b.expect("paired");
        let mut v = diff_norm(&a.lvl1, &b.lvl1) / dt.powf(1.0 / p);
        if with_level2 {
            v += diff_norm(&a.lvl2, &b.lvl2) / dt.powf(2.0 / p);
        }
        v
    });
    let h = dyadic_step(grid_level);
    Ok(ModulusResult {
        p,
        grid_level,
        value,
        argmax_pair: (i as f64 * h, j as f64 * h),
    })
}

/// `sup_{s<t} |X^{(i)}_{s,t}| / (t-s)^β` over the level-`grid_level` grid.
pub fn holder_modulus(x: &EnhancedPath, level: usize, beta: f64, grid_level: u32) -> Result<f64> {
    if level != 1 && level != 2 {
        return Err(Error::domain(format!("tensor level {level} not in {{1, 2}}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::domain(format!("exponent {beta} outside (0, 1]")));
    }
    let xr = restrict_to(x, grid_level)?;
    let (value, _, _) = sup_over_pairs(&xr, None, |a, _, dt| {
        let v = if level == 1 { &a.lvl1 } else { &a.lvl2 };
        norm(v) / dt.powf(beta)
    });
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhanced::lift_linear;
    use crate::sampling::{eval_bm, sample_brownian, SampledPath};
    use ndarray::array;

    fn lift(values: ndarray::Array2<f64>, level: u32) -> EnhancedPath {
        lift_linear(&SampledPath::new(level, values).unwrap())
    }

    #[test]
    fn self_distance_is_zero() {
        let inc = sample_brownian(5, 2, 1, 1).unwrap();
        let x = lift_linear(&eval_bm(&inc, 6).unwrap());
        assert_eq!(modulus_distance(&x, &x, 2.5, 6).unwrap().value, 0.0);
    }

    #[test]
    fn p_below_two_ignores_level_two() {
        let a = sample_brownian(4, 2, 1, 1).unwrap();
        let b = sample_brownian(4, 2, 1, 2).unwrap();
        let x = lift_linear(&eval_bm(&a, 5).unwrap());
        let y = lift_linear(&eval_bm(&b, 5).unwrap());
        let full = modulus_distance(&x, &y, 1.5, 5).unwrap().value;
        let mut by_hand = 0.0f64;
        for i in 0..32 {
            for j in i + 1..=32 {
                let (xa, ya) = (x.increment_idx(i, j).unwrap(), y.increment_idx(i, j).unwrap());
                let dt = (j - i) as f64 / 32.0;
                by_hand = by_hand.max(diff_norm(&xa.lvl1, &ya.lvl1) / dt.powf(1.0 / 1.5));
            }
        }
        assert_eq!(full, by_hand);
    }

    #[test]
    fn two_interval_paths_by_enumeration() {
        let x = lift(array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], 1);
        let y = lift(array![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 1);
        let p = 2.5;
        // (0, 1/2): lvl1 diff (1,-1), lvl2 diff ½(e1e1 - e2e2)
        let a = 2f64.sqrt() / 0.5f64.powf(1.0 / p) + (0.5f64).sqrt() / 0.5f64.powf(2.0 / p);
        // (1/2, 1): same by symmetry
        // (0, 1): lvl1 equal, lvl2 diff is the area: [[0,1],[0,0]] - [[0,0],[1,0]]
        let c = 2f64.sqrt();
        let expect = a.max(c);
        let r = modulus_distance(&x, &y, p, 1).unwrap();
        assert!((r.value - expect).abs() < 1e-14, "{} vs {expect}", r.value);
        assert_eq!(r.argmax_pair, (0.0, 0.5));
    }

    #[test]
    fn symmetric_and_grid_monotone() {
        let a = sample_brownian(6, 2, 3, 1).unwrap();
        let b = sample_brownian(6, 2, 3, 2).unwrap();
        let x = lift_linear(&eval_bm(&a, 7).unwrap());
        let y = lift_linear(&eval_bm(&b, 7).unwrap());
        let xy = modulus_distance(&x, &y, 2.6, 6).unwrap().value;
        let yx = modulus_distance(&y, &x, 2.6, 6).unwrap().value;
        assert!((xy - yx).abs() <= 1e-14 * xy);
        let coarse = modulus_distance(&x, &y, 2.6, 5).unwrap().value;
        assert!(coarse <= xy);
    }

    #[test]
    fn linear_path_modulus_is_one() {
        let n = 16;
        let values = ndarray::Array2::from_shape_fn((n + 1, 1), |(j, _)| j as f64 / n as f64);
        let x = lift(values, 4);
        let v = holder_modulus(&x, 1, 1.0, 4).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        let z = lift(ndarray::Array2::zeros((n + 1, 2)), 4);
        assert_eq!(holder_modulus(&z, 2, 0.5, 4).unwrap(), 0.0);
        assert!(holder_modulus(&x, 3, 0.5, 4).is_err());
    }
}
