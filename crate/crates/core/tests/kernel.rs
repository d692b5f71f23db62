mod common;

use statrs::function::gamma::gamma;

use common::graded_gauss;
use roughfbm::kernel::{
    eval_dkdt, eval_f1, eval_f2, eval_k, eval_km, kernel_norm_sq, l2_increment_error, latin_hypercube_pairs,
    HurstModel, HurstOptions,
};

fn model(h: f64) -> HurstModel {
    HurstModel::calibrate(h).unwrap()
}

/// Same constant as [`model`], evaluated at a tighter quadrature tolerance.
fn tight(h: f64) -> HurstModel {
    let c = model(h).c_h();
    HurstModel::with_constant(
        h,
        c,
        HurstOptions {
            quad_tol: 1e-12,
            ..Default::default()
        },
    )
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn f1_is_bounded_on_log_spaced_arguments() {
    let h = 0.3;
    let m = model(h);
    // The integrand is positive, so F1 increases towards
    // c (1/2 - H) Γ(H - 1/2) Γ(1 - 2H) / Γ(1/2 - H) · (-1).
    let a = h - 0.5;
    let gamma_a = gamma(a + 1.0) / a;
    let limit = -m.c_h() * (0.5 - h) * gamma_a * gamma(1.0 - 2.0 * h) / gamma(0.5 - h);
    let zs: Vec<f64> = (0..=48).map(|k| 1.0 + 10f64.powf(-6.0 + k as f64 * 0.25)).collect();
    let vals: Vec<f64> = zs.iter().map(|&z| eval_f1(z, &m).unwrap()).collect();
    assert!(zs[48] >= 1e6);
    assert!(vals.windows(2).all(|w| w[0] < w[1]));
    assert!(vals.iter().all(|&v| v.is_finite() && v > 0.0 && v < limit), "{} vs {limit}", vals[48]);
}

#[test]
fn f1_matches_graded_mesh_oracle() {
    let h: f64 = 0.3;
    let m = model(h);
    let z: f64 = 2.0;
    let core = graded_gauss(
        |u| u.powf(h - 1.5) * (1.0 - (1.0 + u).powf(h - 0.5)),
        z - 1.0,
        0.15,
        40,
        24,
    );
    let oracle = m.c_h() * (0.5 - h) * core;
    let v = eval_f1(z, &m).unwrap();
    assert!(rel(v, oracle) < 1e-8, "{v} vs {oracle}");
}

#[test]
fn f2_matches_graded_mesh_oracle() {
    let h: f64 = 0.75;
    let m = model(h);
    let z: f64 = 3.0;
    // Dropped innermost piece is below 4 (2·0.05^60)^{1/4}.
    let oracle = graded_gauss(|u| u.powf(h - 1.5) * (1.0 + u).powf(h - 0.5), z - 1.0, 0.05, 60, 24);
    let v = eval_f2(z, &m).unwrap();
    assert!(rel(v, oracle) < 1e-8, "{v} vs {oracle}");
}

#[test]
fn f2_growth_constant_is_stable() {
    let h = 0.75;
    let m = model(h);
    let c: Vec<f64> = [4.0f64, 16.0, 64.0]
        .iter()
        .map(|&z| eval_f2(z, &m).unwrap() / z.powf(2.0 * h - 1.0))
        .collect();
    let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(lo > 0.0 && hi / lo < 2.0, "{c:?}");
}

fn fitted_ratio(pairs: &[(f64, f64)], f: impl Fn(f64, f64) -> f64) -> f64 {
    pairs.iter().map(|&(t, s)| f(t, s)).fold(0.0, f64::max)
}

#[test]
fn rough_kernel_bound_with_one_constant() {
    let h = 0.3;
    let m = model(h);
    let ratio = |t: f64, s: f64| {
        let maj = if s < 0.5 * t { s.powf(h - 0.5) } else { (t - s).powf(h - 0.5) };
        eval_k(t, s, &m).unwrap().abs() / maj
    };
    let c = fitted_ratio(&latin_hypercube_pairs(200, 1), ratio);
    let check = fitted_ratio(&latin_hypercube_pairs(800, 2), ratio);
    assert!(c.is_finite() && c > 0.0);
    assert!(check <= 2.0 * c, "fitted {c}, fresh sample {check}");
}

#[test]
fn kernel_norm_at_half() {
    let m = model(0.3);
    let v = kernel_norm_sq(&m, 0.5).unwrap();
    assert!(rel(v, 0.5f64.powf(0.6)) < 1e-4, "{v}");
    assert!((v - 0.6597540).abs() < 1e-6);
}

#[test]
fn kernel_vanishes_above_diagonal() {
    for h in [0.3, 0.75] {
        let m = model(h);
        for (t, s) in [(0.2, 0.2), (0.2, 0.7), (0.0, 0.5), (1.0, 1.0)] {
            assert_eq!(eval_k(t, s, &m).unwrap(), 0.0);
        }
    }
}

#[test]
fn dkdt_matches_finite_difference() {
    let m = tight(0.3);
    let (t, s, step) = (0.8, 0.3, 1e-6);
    let fd = (eval_k(t + step, s, &m).unwrap() - eval_k(t - step, s, &m).unwrap()) / (2.0 * step);
    let exact = eval_dkdt(t, s, &m).unwrap();
    assert!(rel(fd, exact) < 1e-4, "{fd} vs {exact}");
}

#[test]
fn dkdt_bound_with_one_constant() {
    let h = 0.3;
    let m = model(h);
    let ratio = |t: f64, s: f64| eval_dkdt(t, s, &m).unwrap().abs() / (t - s).powf(h - 1.5);
    let c = fitted_ratio(&latin_hypercube_pairs(500, 3), ratio);
    let check = fitted_ratio(&latin_hypercube_pairs(5000, 4), ratio);
    assert!(c.is_finite() && check <= 2.0 * c, "fitted {c}, fresh sample {check}");
    for (t, s) in latin_hypercube_pairs(100, 5) {
        assert!(eval_dkdt(t, s, &m).unwrap() < 0.0);
    }
}

#[test]
fn constant_is_finite_near_one_half() {
    for h in [0.45, 0.55] {
        let c = model(h).c_h();
        assert!(c.is_finite() && c > 0.0, "H = {h}: {c}");
    }
}

#[test]
fn projection_contracts_the_kernel() {
    let m = model(0.3);
    for t in [0.3, 0.7, 1.0] {
        let full = kernel_norm_sq(&m, t).unwrap();
        for level in [2u32, 5, 8] {
            let n = 1usize << level;
            let h = 1.0 / n as f64;
            let proj: f64 = (0..n)
                .map(|k| eval_km(level, t, (k as f64 + 0.5) * h, &m).unwrap().powi(2))
                .sum::<f64>()
                * h;
            assert!(proj <= full, "t = {t}, m = {level}: {proj} > {full}");
        }
    }
}

#[test]
fn km_interval_average_matches_oracle() {
    let h: f64 = 0.3;
    let m = tight(h);
    // K(1,u) is smooth on [0.5, 0.625].
    let oracle = 8.0 * common::composite_gauss(|u| eval_k(1.0, u, &m).unwrap(), 0.5, 0.625, 4, 20);
    let v = eval_km(3, 1.0, 0.6, &m).unwrap();
    assert!(rel(v, oracle) < 1e-8, "{v} vs {oracle}");
}

#[test]
fn increment_error_uniform_in_m() {
    let pairs = [(0.1, 0.3), (0.25, 0.5), (0.4, 0.45), (0.0, 0.7), (0.6, 1.0)];
    for hurst in [0.3, 0.75] {
        let m = model(hurst);
        let per_level: Vec<f64> = (2u32..=9)
            .map(|lvl| {
                pairs
                    .iter()
                    .map(|&(s, t)| l2_increment_error(s, t, lvl, &m).unwrap() / (t - s).powf(2.0 * hurst))
                    .fold(0.0, f64::max)
            })
            .collect();
        let c = per_level.iter().cloned().fold(0.0, f64::max);
        assert!(c.is_finite() && c > 0.0);
        assert!(c <= 2.0 * per_level[0], "H = {hurst}: {per_level:?}");
        assert_eq!(l2_increment_error(0.3, 0.3, 5, &m).unwrap(), 0.0);
    }
}
