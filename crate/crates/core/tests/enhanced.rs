mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roughfbm::enhanced::{chen_combine, lift_linear, level2_refined_batch, RoughIncrement, DEFAULT_REFINE_TOL};
use roughfbm::kernel::{HurstModel, KernelPrimitive};
use roughfbm::sampling::{sample_brownian, SampledPath};

fn random_block(rng: &mut ChaCha8Rng, d: usize) -> RoughIncrement {
    RoughIncrement {
        lvl1: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        lvl2: (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

fn max_diff(a: &RoughIncrement, b: &RoughIncrement) -> f64 {
    a.lvl1
        .iter()
        .zip(&b.lvl1)
        .chain(a.lvl2.iter().zip(&b.lvl2))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn chen_product_is_associative() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (a, b, c) = (random_block(&mut rng, 3), random_block(&mut rng, 3), random_block(&mut rng, 3));
        let left = chen_combine(&chen_combine(&a, &b).unwrap(), &c).unwrap();
        let right = chen_combine(&a, &chen_combine(&b, &c).unwrap()).unwrap();
        assert!(max_diff(&left, &right) < 1e-12);
    }
    assert!(chen_combine(&RoughIncrement::zero(2), &RoughIncrement::zero(3)).is_err());
}

#[test]
fn increments_split_at_any_grid_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = common::lift_fn(6, 2, |t, c| (7.0 * t + c as f64).sin() + t * t);
    let n = x.intervals();
    for _ in 0..200 {
        let mut v = [rng.gen_range(0..=n), rng.gen_range(0..=n), rng.gen_range(0..=n)];
        v.sort_unstable();
        let whole = x.increment_idx(v[0], v[2]).unwrap();
        let parts = chen_combine(&x.increment_idx(v[0], v[1]).unwrap(), &x.increment_idx(v[1], v[2]).unwrap()).unwrap();
        assert!(max_diff(&whole, &parts) < 1e-12);
    }
    assert_eq!(x.increment_idx(5, 5).unwrap(), RoughIncrement::zero(2));
}

#[test]
fn one_dimensional_lift_is_half_square() {
    let inc = sample_brownian(7, 1, 3, 0).unwrap();
    let path = roughfbm::sampling::eval_bm(&inc, 7).unwrap();
    let x = lift_linear(&path);
    let n = x.intervals();
    for i in 0..n {
        for j in i + 1..=n {
            let r = x.increment_idx(i, j).unwrap();
            assert!((r.lvl2[0] - 0.5 * r.lvl1[0] * r.lvl1[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn one_dimensional_refinements_are_half_square() {
    let model = HurstModel::calibrate(0.4).unwrap();
    let prim = KernelPrimitive::new(&model).unwrap();
    let incs: Vec<_> = (0..4).map(|i| sample_brownian(4, 1, 8, i).unwrap()).collect();
    for level in [6u32, 8, 10] {
        let out = level2_refined_batch(&prim, &incs, &[level], 6, DEFAULT_REFINE_TOL).unwrap();
        for (x, _) in &out {
            let n = x.intervals();
            for i in 0..n {
                for j in i + 1..=n {
                    let r = x.increment_idx(i, j).unwrap();
                    assert!((r.lvl2[0] - 0.5 * r.lvl1[0] * r.lvl1[0]).abs() < 1e-12, "level {level}");
                }
            }
        }
    }
}

#[test]
fn cauchy_differences_decrease_for_most_streams() {
    let model = HurstModel::calibrate(0.4).unwrap();
    let prim = KernelPrimitive::new(&model).unwrap();
    let incs: Vec<_> = (0..100).map(|i| sample_brownian(4, 2, 2024, i).unwrap()).collect();
    let out = level2_refined_batch(&prim, &incs, &[6, 8, 10], 6, DEFAULT_REFINE_TOL).unwrap();
    let decreasing = out.iter().filter(|(_, r)| r.cauchy[1] < r.cauchy[0]).count();
    assert!(decreasing >= 90, "{decreasing} of 100");
}

#[test]
fn lift_of_segment_matches_closed_form() {
    let vals = ndarray::array![[0.0, 0.0], [1.0, 2.0]];
    let x = lift_linear(&SampledPath::new(0, vals).unwrap());
    assert_eq!(x.block(0).lvl2, vec![0.5, 1.0, 1.0, 2.0]);
}
