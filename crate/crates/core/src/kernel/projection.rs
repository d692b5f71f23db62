//! Dyadic projection `K_m(t,s) = 2^m ∫_{Δ_k ∩ (0,t]} K(t,u) du`, the weight
//! tables built from it, and the exact L² projection errors.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

use super::functions::{
    kernel_increment_norm_sq, kernel_integral, kernel_integral_with_gaps, kernel_norm_sq,
};
use super::model::HurstModel;

/// Grid spacing `2^{-m}`.
pub fn dyadic_step(m: u32) -> f64 {
    (-(m as f64)).exp2()
}

/// Index `k = ⌈s 2^m⌉` of the half-open interval `(t_{k-1}, t_k]` holding `s`.
/// `s = 0` maps to the first interval.
pub fn interval_index(m: u32, s: f64) -> usize {
    ((s * dyadic_step(m).recip()).ceil() as usize).max(1)
}

/// `t̄_m = ⌊2^m t⌋ 2^{-m} + 2^{-m}`, the first dyadic point strictly beyond `t`.
pub fn upper_grid_point(m: u32, t: f64) -> f64 {
    let h = dyadic_step(m);
    (t / h).floor() * h + h
}

fn check_level(m: u32) -> Result<()> {
    if m > 30 {
        return Err(Error::domain(format!("level m = {m} exceeds 30")));
    }
    Ok(())
}

fn check_time(name: &str, t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("{name} = {t} outside (0, 1]")));
    }
    Ok(())
}

/// `K_m` on the `k`-th interval (1-based) by direct quadrature.
fn km_on_interval(model: &HurstModel, m: u32, t: f64, k: usize) -> Result<f64> {
    let h = dyadic_step(m);
    let a = (k - 1) as f64 * h;
    if a >= t {
        return Ok(0.0);
    }
    let b = (k as f64 * h).min(t);
    Ok(kernel_integral(model, t, a, b)? / h)
}

/// The projected kernel at `(t,s)`.
pub fn eval_km(m: u32, t: f64, s: f64, model: &HurstModel) -> Result<f64> {
    check_level(m)?;
    check_time("t", t)?;
    check_time("s", s)?;
    km_on_interval(model, m, t, interval_index(m, s))
}

/// All nonzero values `K_m(t, ·)`, one per interval up to the one holding `t`.
fn km_row_direct(model: &HurstModel, m: u32, t: f64) -> Result<Vec<f64>> {
    let last = interval_index(m, t);
    (1..=last).map(|k| km_on_interval(model, m, t, k)).collect()
}

/// `∫_0^1 |K(t,u) - K_m(t,u)|^2 du`, via Pythagoras: the projection is
/// orthogonal, so the error is `‖K_t‖² - ‖K_m(t,·)‖²`.
pub fn l2_projection_error(t: f64, m: u32, model: &HurstModel) -> Result<f64> {
    check_level(m)?;
    check_time("t", t)?;
    let h = dyadic_step(m);
    let full = kernel_norm_sq(model, t)?;
    let proj: f64 = km_row_direct(model, m, t)?.iter().map(|v| v * v).sum::<f64>() * h;
    Ok(full - proj)
}

/// `∫_0^1 |(K(t,u) - K(s,u)) - (K_m(t,u) - K_m(s,u))|^2 du` for `0 <= s <= t <= 1`.
pub fn l2_increment_error(s: f64, t: f64, m: u32, model: &HurstModel) -> Result<f64> {
    check_level(m)?;
    if !(0.0 <= s && s <= t && t <= 1.0) {
        return Err(Error::domain(format!(
            "increment error requires 0 <= s <= t <= 1, got s = {s}, t = {t}"
        )));
    }
    if s == t {
        return Ok(0.0);
    }
    if s == 0.0 {
        return l2_projection_error(t, m, model);
    }
    let h = dyadic_step(m);
    let full = kernel_increment_norm_sq(model, s, t)?;
    let rt = km_row_direct(model, m, t)?;
    let rs = km_row_direct(model, m, s)?;
    let proj: f64 = rt
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let d = a - rs.get(i).copied().unwrap_or(0.0);
            d * d
        })
        .sum::<f64>()
        * h;
    Ok(full - proj)
}

const CHEB_DEGREE: usize = 24;
const PANELS: usize = 40;

/// Barycentric Chebyshev interpolant on `[lo, hi]` (second-kind points).
#[derive(Debug, Clone)]
struct ChebPanel {
    nodes: [f64; CHEB_DEGREE + 1],
    values: [f64; CHEB_DEGREE + 1],
}

fn cheb_nodes(lo: f64, hi: f64) -> [f64; CHEB_DEGREE + 1] {
    let mut x = [0.0; CHEB_DEGREE + 1];
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    for (j, xj) in x.iter_mut().enumerate() {
        // Descending in the panel variable so node 0 is `hi`.
        *xj = mid + half * (std::f64::consts::PI * j as f64 / CHEB_DEGREE as f64).cos();
    }
    x[0] = hi;
    x[CHEB_DEGREE] = lo;
    x
}

impl ChebPanel {
    fn eval(&self, x: f64) -> f64 {
        let nodes = &self.nodes;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..=CHEB_DEGREE {
            let dx = x - nodes[j];
            if dx == 0.0 {
                return self.values[j];
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == CHEB_DEGREE {
                w *= 0.5;
            }
            let q = w / dx;
            num += q * self.values[j];
            den += q;
        }
        num / den
    }
}

/// One-sided primitive of `k(x) = K(1,x)` on `(0, 1/2]`, measured from a
/// fixed end: `from_origin` gives `∫_0^x k`, otherwise `∫_{1-x}^1 k`.
#[derive(Debug, Clone)]
struct SidePrimitive {
    panels: Vec<ChebPanel>,
    from_origin: bool,
    model: HurstModel,
}

impl SidePrimitive {
    fn exact(&self, x: f64) -> Result<f64> {
        if self.from_origin {
            kernel_integral(&self.model, 1.0, 0.0, x)
        } else {
            kernel_integral_with_gaps(&self.model, 1.0, 1.0 - x, 1.0, x, 0.0)
        }
    }

    fn piece(&self, lo: f64, hi: f64) -> Result<f64> {
        if self.from_origin {
            kernel_integral(&self.model, 1.0, lo, hi)
        } else {
            kernel_integral_with_gaps(&self.model, 1.0, 1.0 - hi, 1.0 - lo, hi, lo)
        }
    }

    fn build(model: &HurstModel, from_origin: bool) -> Result<Self> {
        let mut me = SidePrimitive {
            panels: Vec::with_capacity(PANELS),
            from_origin,
            model: *model,
        };
        // Panels [2^{-(i+1)}, 2^{-i}], i = 1..=PANELS, built from the
        // smallest one outward by accumulating short pieces.
        let bottom = (-(PANELS as f64 + 1.0)).exp2();
        let mut base_x = bottom;
        let mut base_val = me.exact(bottom)?;
        let mut built = Vec::with_capacity(PANELS);
        for i in (1..=PANELS).rev() {
            let lo = (-(i as f64 + 1.0)).exp2();
            let hi = (-(i as f64)).exp2();
            debug_assert_eq!(lo, base_x);
            let nodes = cheb_nodes(lo, hi);
            let mut values = [0.0; CHEB_DEGREE + 1];
            let (mut x, mut acc) = (base_x, base_val);
            for j in (0..=CHEB_DEGREE).rev() {
                if nodes[j] > x {
                    acc += me.piece(x, nodes[j])?;
                    x = nodes[j];
                }
                values[j] = acc;
            }
            base_x = hi;
            base_val = acc;
            built.push(ChebPanel { nodes, values });
        }
        built.reverse();
        me.panels = built;
        Ok(me)
    }

    fn eval(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        // Panel i covers [2^{-(i+1)}, 2^{-i}].
        let i = (-x.log2()).floor() as usize;
        if (1..=PANELS).contains(&i) {
            Ok(self.panels[i - 1].eval(x))
        } else {
            self.exact(x)
        }
    }
}

/// Fast route to `∫_a^b K(t,u) du`. The kernel is homogeneous of degree
/// `H - 1/2`, so every such integral is `t^{H+1/2}` times a difference of
/// primitives of `K(1,·)`, which are tabulated once per model.
#[derive(Debug, Clone)]
pub struct KernelPrimitive {
    model: HurstModel,
    left: SidePrimitive,
    right: SidePrimitive,
    half_left: f64,
    half_right: f64,
}

/// A primitive value at one boundary, on whichever side is accurate there.
#[derive(Debug, Clone, Copy)]
enum Boundary {
    /// `∫_0^{a/t} k`
    Left(f64),
    /// `∫_{a/t}^1 k`
    Right(f64),
}

impl KernelPrimitive {
    pub fn new(model: &HurstModel) -> Result<Self> {
        let left = SidePrimitive::build(model, true)?;
        let right = SidePrimitive::build(model, false)?;
        let half_left = left.eval(0.5)?;
        let half_right = right.eval(0.5)?;
        Ok(Self {
            model: *model,
            left,
            right,
            half_left,
            half_right,
        })
    }

    pub fn model(&self) -> &HurstModel {
        &self.model
    }

    fn boundary(&self, t: f64, a: f64) -> Result<Boundary> {
        let y = a / t;
        if y <= 0.5 {
            Ok(Boundary::Left(self.left.eval(y)?))
        } else {
            Ok(Boundary::Right(self.right.eval((t - a) / t)?))
        }
    }

    fn span(&self, lo: Boundary, hi: Boundary) -> f64 {
        match (lo, hi) {
            (Boundary::Left(p), Boundary::Left(q)) => q - p,
            (Boundary::Right(p), Boundary::Right(q)) => p - q,
            (Boundary::Left(p), Boundary::Right(q)) => (self.half_left - p) + (self.half_right - q),
            (Boundary::Right(p), Boundary::Left(q)) => -((self.half_left - q) + (self.half_right - p)),
        }
    }

    /// `∫_a^b K(t,u) du` for `0 <= a <= b <= t`.
    pub fn integral(&self, t: f64, a: f64, b: f64) -> Result<f64> {
        if !(0.0 <= a && a <= b && b <= t && t > 0.0) {
            return Err(Error::domain(format!(
                "primitive requires 0 <= a <= b <= t, got a = {a}, b = {b}, t = {t}"
            )));
        }
        let scale = t.powf(self.model.hurst() + 0.5);
        Ok(scale * self.span(self.boundary(t, a)?, self.boundary(t, b)?))
    }

    /// The row `K_m(t, ·)` over all `2^m` intervals.
    pub fn km_row(&self, m: u32, t: f64, out: &mut [f64]) -> Result<()> {
        let n = 1usize << m;
        if out.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: out.len(),
            });
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        if t <= 0.0 {
            return Ok(());
        }
        let h = dyadic_step(m);
        let scale = t.powf(self.model.hurst() + 0.5) / h;
        let last = interval_index(m, t).min(n);
        let mut lo = self.boundary(t, 0.0)?;
        for (k, slot) in out.iter_mut().enumerate().take(last) {
            let b = ((k + 1) as f64 * h).min(t);
            let hi = self.boundary(t, b)?;
            *slot = scale * self.span(lo, hi);
            lo = hi;
        }
        Ok(())
    }
}

/// `W[j][k] = K_m(t_j, s_k)` for a list of evaluation times.
#[derive(Debug, Clone, Serialize)]
pub struct KernelWeightTable {
    pub m: u32,
    pub eval_times: Vec<f64>,
    #[serde(skip)]
    pub weights: Array2<f64>,
}

fn check_times(times: &[f64]) -> Result<()> {
    for w in times.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(Error::invalid("evaluation times must be sorted"));
        }
    }
    for &t in times {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("evaluation time {t} outside [0, 1]")));
        }
    }
    Ok(())
}

impl KernelWeightTable {
    /// Build from the tabulated primitive; rows are filled in parallel.
    pub fn build(prim: &KernelPrimitive, m: u32, eval_times: &[f64]) -> Result<Self> {
        check_level(m)?;
        check_times(eval_times)?;
        let n = 1usize << m;
        let mut weights = Array2::<f64>::zeros((eval_times.len(), n));
        weights
            .as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n)
            .zip(eval_times.par_iter())
            .try_for_each(|(row, &t)| prim.km_row(m, t, row))?;
        Ok(Self {
            m,
            eval_times: eval_times.to_vec(),
            weights,
        })
    }

    /// Build by direct quadrature per entry. Slow; an independent route.
    pub fn build_direct(model: &HurstModel, m: u32, eval_times: &[f64]) -> Result<Self> {
        check_level(m)?;
        check_times(eval_times)?;
        let n = 1usize << m;
        let mut weights = Array2::<f64>::zeros((eval_times.len(), n));
        weights
            .as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n)
            .zip(eval_times.par_iter())
            .try_for_each(|(row, &t)| -> Result<()> {
                if t > 0.0 {
                    let vals = km_row_direct(model, m, t)?;
                    row[..vals.len()].copy_from_slice(&vals);
                }
                Ok(())
            })?;
        Ok(Self {
            m,
            eval_times: eval_times.to_vec(),
            weights,
        })
    }

    /// Evaluation times `j 2^{-level}`, `j = 0..=2^level`.
    pub fn grid_times(level: u32) -> Vec<f64> {
        let h = dyadic_step(level);
        (0..=(1usize << level)).map(|j| j as f64 * h).collect()
    }

    /// `2^{-m} Σ_k W[j][k]^2`, the squared L² norm of row `j`.
    pub fn row_norm_sq(&self, j: usize) -> f64 {
        self.weights.row(j).iter().map(|v| v * v).sum::<f64>() * dyadic_step(self.m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::eval_k;
    use crate::quadrature::{integrate, QuadOptions};

    fn model(h: f64) -> HurstModel {
        HurstModel::calibrate(h).unwrap()
    }

    #[test]
    fn dyadic_helpers() {
        assert_eq!(interval_index(3, 0.6), 5);
        assert_eq!(interval_index(3, 0.625), 5);
        assert_eq!(interval_index(3, 0.6250001), 6);
        assert_eq!(interval_index(3, 0.0), 1);
        assert_eq!(upper_grid_point(3, 0.6), 0.625);
        assert_eq!(upper_grid_point(3, 0.625), 0.75);
    }

    #[test]
    fn km_vanishes_beyond_upper_grid_point() {
        let m = model(0.3);
        for &(t, s) in &[(0.3, 0.4), (0.5, 0.7), (0.26, 0.38)] {
            assert!(s >= upper_grid_point(3, t));
            assert_eq!(eval_km(3, t, s, &m).unwrap(), 0.0);
        }
    }

    #[test]
    fn km_interior_value_matches_plain_quadrature() {
        let m = model(0.3);
        let direct = integrate(
            |u| eval_k(1.0, u, &m).unwrap(),
            0.5,
            0.625,
            &QuadOptions::with_rel_tol(1e-12),
        )
        .unwrap()
        .value;
        let km = eval_km(3, 1.0, 0.6, &m).unwrap();
        assert!((km - 8.0 * direct).abs() < 1e-8 * km.abs());
    }

    #[test]
    fn primitive_matches_direct_integrals() {
        for h in [0.3, 0.75] {
            let m = model(h);
            let prim = KernelPrimitive::new(&m).unwrap();
            for &(t, a, b) in &[
                (1.0, 0.0, 0.125),
                (0.7, 0.3, 0.45),
                (0.9, 0.44, 0.9),
                (0.5, 0.499, 0.5),
                (1.0, 0.2, 0.8),
                (0.3, 1e-5, 2e-5),
            ] {
                let fast = prim.integral(t, a, b).unwrap();
                let slow = kernel_integral(&m, t, a, b).unwrap();
                assert!(
                    (fast - slow).abs() < 1e-9 * slow.abs(),
                    "H={h} ({t},{a},{b}): {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn fast_and_direct_tables_agree() {
        let m = model(0.4);
        let prim = KernelPrimitive::new(&m).unwrap();
        let times = KernelWeightTable::grid_times(5);
        let fast = KernelWeightTable::build(&prim, 3, &times).unwrap();
        let slow = KernelWeightTable::build_direct(&m, 3, &times).unwrap();
        for (a, b) in fast.weights.iter().zip(slow.weights.iter()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn table_rows_are_contractions() {
        let m = model(0.3);
        let prim = KernelPrimitive::new(&m).unwrap();
        let times = [0.3, 0.7, 1.0];
        for level in [2, 5, 8] {
            let table = KernelWeightTable::build(&prim, level, &times).unwrap();
            for (j, &t) in times.iter().enumerate() {
                assert!(table.row_norm_sq(j) <= kernel_norm_sq(&m, t).unwrap() + 1e-9);
            }
        }
    }

    #[test]
    fn projection_error_refines_monotonically() {
        let m = model(0.35);
        let mut prev = f64::INFINITY;
        for level in 0..7 {
            let e = l2_projection_error(1.0, level, &m).unwrap();
            assert!(e > 0.0 && e <= prev + 1e-9, "m={level}: {e} after {prev}");
            prev = e;
        }
    }

    #[test]
    fn coarse_projection_error_bounded_by_variance() {
        let m = model(0.3);
        for &t in &[0.1, 0.2] {
            let e = l2_projection_error(t, 2, &m).unwrap();
            assert!(e <= 4.0 * t.powf(0.6));
        }
    }

    #[test]
    fn increment_error_zero_on_diagonal() {
        assert_eq!(l2_increment_error(0.4, 0.4, 3, &model(0.3)).unwrap(), 0.0);
    }

    #[test]
    fn increment_error_triangle_inequality() {
        let m = model(0.3);
        for level in [2, 4] {
            let (s, t) = (0.3, 0.8);
            let st = l2_increment_error(s, t, level, &m).unwrap().sqrt();
            let ot = l2_projection_error(t, level, &m).unwrap().sqrt();
            let os = l2_projection_error(s, level, &m).unwrap().sqrt();
            assert!(st <= ot + os + 1e-6);
        }
    }
}
