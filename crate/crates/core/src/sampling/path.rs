use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{dyadic_step, interval_index, KernelPrimitive, KernelWeightTable};

use super::increments::DyadicIncrements;

/// A `d`-dimensional path on the level-`L` dyadic grid, `2^L + 1` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    level: u32,
    values: Array2<f64>,
}

impl SampledPath {
    pub fn new(level: u32, values: Array2<f64>) -> Result<Self> {
        if level > 30 {
            return Err(Error::domain(format!("grid level {level} exceeds 30")));
        }
        let n = (1usize << level) + 1;
        if values.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: values.nrows(),
            });
        }
        if values.ncols() == 0 {
            return Err(Error::invalid("dimension d must be at least 1"));
        }
        if values.row(0).iter().any(|&v| v != 0.0) {
            return Err(Error::Invariant("paths must start at 0".into()));
        }
        Ok(Self {
            level,
            values: values.as_standard_layout().into_owned(),
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Time of grid index `j`.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * dyadic_step(self.level)
    }

    /// Subsample onto a coarser grid.
    pub fn restrict(&self, level: u32) -> Result<Self> {
        if level > self.level {
            return Err(Error::LevelMismatch(format!(
                "cannot restrict level {} to finer level {level}",
                self.level
            )));
        }
        let r = 1usize << (self.level - level);
        let values = self.values.slice(s![..;r, ..]).to_owned();
        Self::new(level, values)
    }
}

/// The piecewise-linear interpolant `B(m)` of the increments, on a level-`L` grid.
pub fn eval_bm(inc: &DyadicIncrements, level: u32) -> Result<SampledPath> {
    if level < inc.m() {
        return Err(Error::LevelMismatch(format!(
            "grid level {level} below increment level {}",
            inc.m()
        )));
    }
    let r = 1usize << (level - inc.m());
    let d = inc.d();
    let n = 1usize << level;
    let deltas = inc.deltas();
    let mut values = Array2::<f64>::zeros((n + 1, d));
    let mut node = vec![0.0; d];
    for k in 0..deltas.nrows() {
        for i in 0..r {
            let frac = i as f64 / r as f64;
            for c in 0..d {
                values[[k * r + i, c]] = node[c] + frac * deltas[[k, c]];
            }
        }
        for c in 0..d {
            node[c] += deltas[[k, c]];
        }
    }
    for c in 0..d {
        values[[n, c]] = node[c];
    }
    SampledPath::new(level, values)
}

fn grid_level_of(table: &KernelWeightTable) -> Result<u32> {
    let n = table.eval_times.len();
    if n < 2 || !(n - 1).is_power_of_two() {
        return Err(Error::invalid(
            "weight table must be built on a full dyadic grid",
        ));
    }
    let level = (n - 1).trailing_zeros();
    let h = dyadic_step(level);
    if table
        .eval_times
        .iter()
        .enumerate()
        .any(|(j, &t)| t != j as f64 * h)
    {
        return Err(Error::invalid(
            "weight table must be built on a full dyadic grid",
        ));
    }
    Ok(level)
}

/// `W(m)_{t_j} = Σ_k K_m(t_j, s_k) Δ_k^m B` as one matrix product.
pub fn eval_wm(inc: &DyadicIncrements, table: &KernelWeightTable) -> Result<SampledPath> {
    if table.m != inc.m() {
        return Err(Error::LevelMismatch(format!(
            "table level {} vs increment level {}",
            table.m,
            inc.m()
        )));
    }
    let level = grid_level_of(table)?;
    SampledPath::new(level, table.weights.dot(inc.deltas()))
}

/// Same values as [`eval_wm`], summed over the increments of a finer level
/// `M >= m` one at a time, last to first. An independent summation route.
pub fn eval_wm_from_fine(fine: &DyadicIncrements, table: &KernelWeightTable) -> Result<SampledPath> {
    if table.m > fine.m() {
        return Err(Error::LevelMismatch(format!(
            "table level {} finer than increments at level {}",
            table.m,
            fine.m()
        )));
    }
    let level = grid_level_of(table)?;
    let shift = fine.m() - table.m;
    let d = fine.d();
    let deltas = fine.deltas();
    let mut values = Array2::<f64>::zeros((table.eval_times.len(), d));
    for (j, w) in table.weights.outer_iter().enumerate() {
        for c in 0..d {
            let mut acc = 0.0;
            for i in (0..deltas.nrows()).rev() {
                acc += w[i >> shift] * deltas[[i, c]];
            }
            values[[j, c]] = acc;
        }
    }
    SampledPath::new(level, values)
}

/// Many streams of `W(m)` on one level-`L` grid, evaluated in row chunks so
/// that the `(2^L + 1) × 2^m` weight matrix is never held in full.
pub struct WmBatch<'a> {
    prim: &'a KernelPrimitive,
    m: u32,
    level: u32,
    d: usize,
    /// `2^m × (streams · d)`, column `stream · d + channel`.
    rhs: Array2<f64>,
}

impl<'a> WmBatch<'a> {
    /// All increments must share level `m` (coarsen them first) and dimension.
    /// The grid may be coarser than `m`.
    pub fn new(prim: &'a KernelPrimitive, level: u32, incs: &[DyadicIncrements]) -> Result<Self> {
        let first = incs
            .first()
            .ok_or_else(|| Error::invalid("empty batch of increments"))?;
        let (m, d) = (first.m(), first.d());
        if level > 30 {
            return Err(Error::domain(format!("grid level {level} exceeds 30")));
        }
        let mut rhs = Array2::<f64>::zeros((1usize << m, incs.len() * d));
        for (i, inc) in incs.iter().enumerate() {
            if inc.m() != m {
                return Err(Error::LevelMismatch(format!(
                    "batch mixes levels {m} and {}",
                    inc.m()
                )));
            }
            if inc.d() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: inc.d(),
                });
            }
            rhs.slice_mut(s![.., i * d..(i + 1) * d]).assign(inc.deltas());
        }
        Ok(Self {
            prim,
            m,
            level,
            d,
            rhs,
        })
    }

    pub fn streams(&self) -> usize {
        self.rhs.ncols() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Calls `f(first_row, values)` for consecutive chunks of grid rows,
    /// `values` being `rows × (streams · d)`.
    pub fn for_each_chunk<F>(&self, chunk_rows: usize, mut f: F) -> Result<()>
    where
        F: FnMut(usize, ArrayView2<f64>) -> Result<()>,
    {
        let n_rows = (1usize << self.level) + 1;
        let n_k = 1usize << self.m;
        let h = dyadic_step(self.level);
        let chunk_rows = chunk_rows.max(1);
        let mut weights = Array2::<f64>::zeros((chunk_rows, n_k));
        let mut start = 0;
        while start < n_rows {
            let rows = chunk_rows.min(n_rows - start);
            weights
                .as_slice_mut()
                .expect("standard layout")
                .par_chunks_mut(n_k)
                .take(rows)
                .enumerate()
                .try_for_each(|(i, row)| self.prim.km_row(self.m, (start + i) as f64 * h, row))?;
            // Rows are increasing in t, so columns past the last row's
            // interval are zero throughout the chunk.
            let t_last = (start + rows - 1) as f64 * h;
            let k_max = if t_last > 0.0 {
                interval_index(self.m, t_last).min(n_k)
            } else {
                1
            };
            let w = weights.slice(s![..rows, ..k_max]);
            let vals = w.dot(&self.rhs.slice(s![..k_max, ..]));
            f(start, vals.view())?;
            start += rows;
        }
        Ok(())
    }

    /// Materialise every stream as a [`SampledPath`].
    pub fn paths(&self) -> Result<Vec<SampledPath>> {
        let n_rows = (1usize << self.level) + 1;
        let mut all = Array2::<f64>::zeros((n_rows, self.rhs.ncols()));
        self.for_each_chunk(1024, |start, vals| {
            all.slice_mut(s![start..start + vals.nrows(), ..]).assign(&vals);
            Ok(())
        })?;
        all.axis_chunks_iter(Axis(1), self.d)
            .map(|v| SampledPath::new(self.level, v.to_owned()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::HurstModel;
    use crate::sampling::sample_brownian;

    #[test]
    fn bm_interpolates_nodes() {
        let inc = sample_brownian(3, 2, 4, 0).unwrap();
        let p = eval_bm(&inc, 5).unwrap();
        let mut cum = [0.0, 0.0];
        for k in 0..8 {
            for c in 0..2 {
                assert!((p.values()[[4 * k, c]] - cum[c]).abs() < 1e-15);
                let mid = p.values()[[4 * k + 2, c]];
                let avg = 0.5 * (cum[c] + cum[c] + inc.deltas()[[k, c]]);
                assert!((mid - avg).abs() < 1e-15);
                cum[c] += inc.deltas()[[k, c]];
            }
        }
        assert!(eval_bm(&inc, 2).is_err());
    }

    #[test]
    fn restrict_subsamples() {
        let inc = sample_brownian(4, 1, 0, 0).unwrap();
        let p = eval_bm(&inc, 6).unwrap();
        let q = p.restrict(4).unwrap();
        assert_eq!(q, eval_bm(&inc, 4).unwrap());
    }

    #[test]
    fn batch_matches_single_table() {
        let model = HurstModel::calibrate(0.4).unwrap();
        let prim = KernelPrimitive::new(&model).unwrap();
        let incs: Vec<_> = (0..3)
            .map(|i| sample_brownian(4, 2, 1, i).unwrap())
            .collect();
        let table = KernelWeightTable::build(&prim, 4, &KernelWeightTable::grid_times(6)).unwrap();
        let batch = WmBatch::new(&prim, 6, &incs).unwrap();
        let mut paths = Vec::new();
        // Odd chunk size exercises the tail chunk.
        let n_rows = 65;
        let mut all = Array2::<f64>::zeros((n_rows, 6));
        batch
            .for_each_chunk(7, |start, v| {
                all.slice_mut(s![start..start + v.nrows(), ..]).assign(&v);
                Ok(())
            })
            .unwrap();
        for (i, inc) in incs.iter().enumerate() {
            let single = eval_wm(inc, &table).unwrap();
            let chunked = all.slice(s![.., 2 * i..2 * i + 2]);
            for (a, b) in single.values().iter().zip(chunked.iter()) {
                assert!((a - b).abs() < 1e-13);
            }
            paths.push(single);
        }
        assert_eq!(batch.paths().unwrap().len(), 3);
    }
}
