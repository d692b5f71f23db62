use ndarray::Array2;
use proptest::prelude::*;
use roughfbm::kernel::{eval_km, HurstModel, KernelPrimitive, KernelWeightTable};
use roughfbm::sampling::{eval_bm, eval_wm, eval_wm_from_fine, sample_brownian, DyadicIncrements, WmBatch};

#[test]
fn increments_have_the_right_moments() {
    let (m, n, idx) = (4u32, 10_000u64, 5usize);
    let var = 1.0 / 16.0;
    let xs: Vec<f64> = (0..n)
        .map(|i| sample_brownian(m, 1, 11, i).unwrap().deltas()[[idx, 0]])
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sample_var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() <= 5.0 * (var / n as f64).sqrt(), "mean {mean}");
    assert!((sample_var - var).abs() <= 0.1 * var, "variance {sample_var}");
}

#[test]
fn interpolant_slope_is_scaled_increment() {
    let (m, level) = (3u32, 6u32);
    let inc = sample_brownian(m, 2, 5, 0).unwrap();
    let path = eval_bm(&inc, level).unwrap();
    let r = 1usize << (level - m);
    for j in 0..(1usize << level) {
        let k = j / r;
        for c in 0..2 {
            let slope = (path.values()[[j + 1, c]] - path.values()[[j, c]]) * (1u64 << level) as f64;
            let expect = (1u64 << m) as f64 * inc.deltas()[[k, c]];
            assert!((slope - expect).abs() < 1e-12 * (1.0 + expect.abs()), "j = {j}");
        }
    }
}

#[test]
fn nested_interpolants_agree_on_coarse_nodes() {
    let fine = sample_brownian(9, 2, 5, 3).unwrap();
    let coarse = fine.coarsen(4).unwrap();
    let bf = eval_bm(&fine, 9).unwrap().restrict(4).unwrap();
    let bc = eval_bm(&coarse, 4).unwrap();
    for (a, b) in bf.values().iter().zip(bc.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn single_increment_gives_projected_kernel() {
    let model = HurstModel::calibrate(0.4).unwrap();
    let (m, level) = (3u32, 6u32);
    let mut deltas = Array2::<f64>::zeros((8, 2));
    deltas[[0, 0]] = 1.0;
    let inc = DyadicIncrements::from_deltas(m, deltas, 0, 0).unwrap();
    let times = KernelWeightTable::grid_times(level);
    let table = KernelWeightTable::build_direct(&model, m, &times).unwrap();
    let w = eval_wm(&inc, &table).unwrap();
    for (j, &t) in times.iter().enumerate() {
        let expect = if t > 0.0 { eval_km(m, t, 0.0625, &model).unwrap() } else { 0.0 };
        assert!((w.values()[[j, 0]] - expect).abs() <= 1e-12 * (1.0 + expect.abs()), "t = {t}");
        assert_eq!(w.values()[[j, 1]], 0.0);
    }
}

#[test]
fn coarse_and_fine_summation_agree() {
    let model = HurstModel::calibrate(0.3).unwrap();
    let prim = KernelPrimitive::new(&model).unwrap();
    let fine = sample_brownian(10, 2, 9, 4).unwrap();
    for m in [3u32, 6] {
        let table = KernelWeightTable::build(&prim, m, &KernelWeightTable::grid_times(8)).unwrap();
        let a = eval_wm(&fine.coarsen(m).unwrap(), &table).unwrap();
        let b = eval_wm_from_fine(&fine, &table).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn cameron_martin_embedding_has_no_violations() {
    let hurst = 0.4;
    let model = HurstModel::calibrate(hurst).unwrap();
    let prim = KernelPrimitive::new(&model).unwrap();
    let (m, level) = (5u32, 8u32);
    let incs: Vec<_> = (0..100).map(|i| sample_brownian(m, 2, 77, i).unwrap()).collect();
    let paths = WmBatch::new(&prim, level, &incs).unwrap().paths().unwrap();
    let n = 1usize << level;
    let h = 1.0 / n as f64;
    let mut violations = 0;
    for (inc, path) in incs.iter().zip(&paths) {
        let cm = inc.cameron_martin_norm();
        let v = path.values();
        for i in 0..n {
            for j in i + 1..=n {
                let d = ((v[[j, 0]] - v[[i, 0]]).powi(2) + (v[[j, 1]] - v[[i, 1]]).powi(2)).sqrt();
                if d > ((j - i) as f64 * h).powf(hurst) * cm {
                    violations += 1;
                }
            }
        }
    }
    assert_eq!(violations, 0);
}

proptest! {
    #[test]
    fn sampling_is_a_pure_function(seed in any::<u64>(), stream in 0u64..1_000_000, m in 1u32..8, d in 1usize..4) {
        let a = sample_brownian(m, d, seed, stream).unwrap();
        let b = sample_brownian(m, d, seed, stream).unwrap();
        prop_assert_eq!(a.deltas(), b.deltas());
        prop_assert_eq!(a.deltas().dim(), (1usize << m, d));
    }

    #[test]
    fn coarsening_preserves_the_endpoint(seed in any::<u64>(), m in 2u32..10, k in 0u32..10) {
        let fine = sample_brownian(m, 2, seed, 0).unwrap();
        let c = fine.coarsen(k.min(m)).unwrap();
        for ch in 0..2 {
            let a: f64 = fine.deltas().column(ch).sum();
            let b: f64 = c.deltas().column(ch).sum();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
