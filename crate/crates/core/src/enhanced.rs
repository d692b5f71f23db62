//! Level-2 rough paths over dyadic grids: per-interval blocks, Chen folding,
//! and the refinement limit that defines the level-2 values of `W(m)`.

use std::io::{BufRead, Write};

use ndarray::{s, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{dyadic_step, KernelPrimitive};
use crate::sampling::{DyadicIncrements, SampledPath, WmBatch};

/// Default relative tolerance on the last Cauchy difference of a refinement.
pub const DEFAULT_REFINE_TOL: f64 = 1e-3;

/// A level-1 vector and a level-2 matrix (row-major `d × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct RoughIncrement {
    pub lvl1: Vec<f64>,
    pub lvl2: Vec<f64>,
}

impl RoughIncrement {
    pub fn zero(d: usize) -> Self {
        Self {
            lvl1: vec![0.0; d],
            lvl2: vec![0.0; d * d],
        }
    }

    /// The signature of a straight segment: `(v, v⊗v / 2)`.
    pub fn linear(v: &[f64]) -> Self {
        let d = v.len();
        let mut lvl2 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                lvl2[i * d + j] = 0.5 * v[i] * v[j];
            }
        }
        Self {
            lvl1: v.to_vec(),
            lvl2,
        }
    }

    pub fn d(&self) -> usize {
        self.lvl1.len()
    }

    /// In place `self ← self ⊗ linear(v)`, the common case of appending a segment.
    pub fn push_segment(&mut self, v: ArrayView1<f64>) {
        let d = self.d();
        for i in 0..d {
            let a = self.lvl1[i];
            for j in 0..d {
                self.lvl2[i * d + j] += (a + 0.5 * v[i]) * v[j];
            }
        }
        for i in 0..d {
            self.lvl1[i] += v[i];
        }
    }

    /// In place `self ← self ⊗ b`.
    pub fn extend(&mut self, b: &RoughIncrement) {
        let d = self.d();
        for i in 0..d {
            let a = self.lvl1[i];
            for j in 0..d {
                self.lvl2[i * d + j] += b.lvl2[i * d + j] + a * b.lvl1[j];
            }
        }
        for i in 0..d {
            self.lvl1[i] += b.lvl1[i];
        }
    }

    /// `‖Sym(lvl2) - lvl1⊗lvl1 / 2‖_max`
    pub fn shuffle_defect(&self) -> f64 {
        let d = self.d();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let sym = 0.5 * (self.lvl2[i * d + j] + self.lvl2[j * d + i]);
                worst = worst.max((sym - 0.5 * self.lvl1[i] * self.lvl1[j]).abs());
            }
        }
        worst
    }

    /// Antisymmetric part of `lvl2` (the Lévy area), row-major.
    pub fn area(&self) -> Vec<f64> {
        let d = self.d();
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = 0.5 * (self.lvl2[i * d + j] - self.lvl2[j * d + i]);
            }
        }
        a
    }
}

/// Chen's identity: `(a₁ + b₁, a₂ + b₂ + a₁⊗b₁)`.
pub fn chen_combine(a: &RoughIncrement, b: &RoughIncrement) -> Result<RoughIncrement> {
    if a.d() != b.d() || a.lvl2.len() != b.lvl2.len() {
        return Err(Error::DimensionMismatch {
            expected: a.d(),
            found: b.d(),
        });
    }
    let mut out = a.clone();
    out.extend(b);
    Ok(out)
}

/// Per-interval level-1 and level-2 blocks on the level-`L` dyadic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedPath {
    level: u32,
    d: usize,
    /// `2^L × d`
    lvl1: Array2<f64>,
    /// `2^L × d²`
    lvl2: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct JsonBlock {
    level: u32,
    d: usize,
    lvl1: Vec<f64>,
    lvl2: Vec<f64>,
}

impl EnhancedPath {
    pub fn from_blocks(level: u32, blocks: &[RoughIncrement]) -> Result<Self> {
        let n = 1usize << level;
        if blocks.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: blocks.len(),
            });
        }
        let d = blocks[0].d();
        let mut lvl1 = Array2::zeros((n, d));
        let mut lvl2 = Array2::zeros((n, d * d));
        for (j, b) in blocks.iter().enumerate() {
            if b.d() != d || b.lvl2.len() != d * d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: b.d(),
                });
            }
            lvl1.row_mut(j).assign(&ArrayView1::from(&b.lvl1));
            lvl2.row_mut(j).assign(&ArrayView1::from(&b.lvl2));
        }
        Ok(Self { level, d, lvl1, lvl2 })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn intervals(&self) -> usize {
        self.lvl1.nrows()
    }

    fn extend_with_block(&self, acc: &mut RoughIncrement, k: usize) {
        let (l1, l2) = (self.lvl1.row(k), self.lvl2.row(k));
        let d = self.d;
        for i in 0..d {
            let a = acc.lvl1[i];
            for j in 0..d {
                acc.lvl2[i * d + j] += l2[i * d + j] + a * l1[j];
            }
        }
        for i in 0..d {
            acc.lvl1[i] += l1[i];
        }
    }

    pub fn block(&self, j: usize) -> RoughIncrement {
        RoughIncrement {
            lvl1: self.lvl1.row(j).to_vec(),
            lvl2: self.lvl2.row(j).to_vec(),
        }
    }

    /// Increment between grid indices `i <= j`, folded left to right.
    pub fn increment_idx(&self, i: usize, j: usize) -> Result<RoughIncrement> {
        if i > j || j > self.intervals() {
            return Err(Error::invalid(format!(
                "grid indices ({i}, {j}) out of order or beyond {}",
                self.intervals()
            )));
        }
        let mut acc = RoughIncrement::zero(self.d);
        for k in i..j {
            self.extend_with_block(&mut acc, k);
        }
        Ok(acc)
    }

    fn grid_index(&self, t: f64) -> Result<usize> {
        let x = t / dyadic_step(self.level);
        let j = x.round();
        if !(0.0..=1.0).contains(&t) || (x - j).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "time {t} is not on the level-{} grid",
                self.level
            )));
        }
        Ok(j as usize)
    }

    /// `(X^{(1)}_{s,t}, X^{(2)}_{s,t})` for grid times `s <= t`.
    pub fn increment(&self, s: f64, t: f64) -> Result<RoughIncrement> {
        let (i, j) = (self.grid_index(s)?, self.grid_index(t)?);
        self.increment_idx(i, j)
    }

    /// Calls `f(j, X_{t_i, t_j})` for `j = i+1 ..= 2^L`, reusing each fold.
    pub fn for_each_from<F: FnMut(usize, &RoughIncrement)>(&self, i: usize, mut f: F) {
        let mut acc = RoughIncrement::zero(self.d);
        for k in i..self.intervals() {
            self.extend_with_block(&mut acc, k);
            f(k + 1, &acc);
        }
    }

    /// Fold blocks onto a coarser grid.
    pub fn restrict(&self, level: u32) -> Result<Self> {
        if level > self.level {
            return Err(Error::LevelMismatch(format!(
                "cannot restrict level {} to finer level {level}",
                self.level
            )));
        }
        let r = 1usize << (self.level - level);
        let blocks: Vec<_> = (0..1usize << level)
            .map(|b| self.increment_idx(b * r, (b + 1) * r))
            .collect::<Result<_>>()?;
        Self::from_blocks(level, &blocks)
    }

    /// Largest per-interval violation of `Sym(X²) = X¹⊗X¹ / 2`.
    pub fn shuffle_defect(&self) -> f64 {
        (0..self.intervals())
            .map(|j| self.block(j).shuffle_defect())
            .fold(0.0, f64::max)
    }

    pub fn check_shuffle(&self, tol: f64) -> Result<()> {
        let e = self.shuffle_defect();
        if e > tol {
            return Err(Error::Invariant(format!(
                "shuffle identity violated by {e:e} (tolerance {tol:e})"
            )));
        }
        Ok(())
    }

    /// Largest relative Chen defect over the given `(s, u, t)` index triples.
    pub fn chen_defect(&self, triples: &[(usize, usize, usize)]) -> Result<f64> {
        let mut worst = 0.0f64;
        for &(i, k, j) in triples {
            let whole = self.increment_idx(i, j)?;
            let split = chen_combine(&self.increment_idx(i, k)?, &self.increment_idx(k, j)?)?;
            let scale = whole.lvl2.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for (a, b) in whole.lvl2.iter().zip(&split.lvl2) {
                worst = worst.max((a - b).abs() / scale);
            }
        }
        Ok(worst)
    }

    pub fn write_json_lines<W: Write>(&self, mut w: W) -> Result<()> {
        for j in 0..self.intervals() {
            let rec = JsonBlock {
                level: self.level,
                d: self.d,
                lvl1: self.lvl1.row(j).to_vec(),
                lvl2: self.lvl2.row(j).to_vec(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(|e| Error::Format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_json_lines<R: BufRead>(r: R) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut level = None;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: JsonBlock =
                serde_json::from_str(&line).map_err(|e| Error::Format(e.to_string()))?;
            if *level.get_or_insert(rec.level) != rec.level || rec.lvl1.len() != rec.d {
                return Err(Error::Format("inconsistent enhanced-path record".into()));
            }
            blocks.push(RoughIncrement {
                lvl1: rec.lvl1,
                lvl2: rec.lvl2,
            });
        }
        let level = level.ok_or_else(|| Error::Format("no records".into()))?;
        Self::from_blocks(level, &blocks)
    }
}

/// Lift a sampled path by linear interpolation between grid nodes.
pub fn lift_linear(path: &SampledPath) -> EnhancedPath {
    let v = path.values();
    let n = v.nrows() - 1;
    let d = path.d();
    let mut lvl1 = Array2::zeros((n, d));
    let mut lvl2 = Array2::zeros((n, d * d));
    for j in 0..n {
        for a in 0..d {
            let da = v[[j + 1, a]] - v[[j, a]];
            lvl1[[j, a]] = da;
            for b in 0..d {
                lvl2[[j, a * d + b]] = 0.5 * da * (v[[j + 1, b]] - v[[j, b]]);
            }
        }
    }
    EnhancedPath {
        level: path.level(),
        d,
        lvl1,
        lvl2,
    }
}

/// Cauchy differences between successive refinements of one stream.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub levels: Vec<u32>,
    pub output_level: u32,
    /// `sup_{s<t} ‖X²_{s,t}(L_{i+1}) - X²_{s,t}(L_i)‖_max`, relative to
    /// `sup_{s<t} ‖X²_{s,t}(L_{i+1})‖_max`, over output-grid pairs.
    pub cauchy: Vec<f64>,
    pub refine_tol: f64,
    pub converged: bool,
}

/// Grid levels used by default for `W(m)`: steps of two from
/// `max(m + 2, output_level)`, three levels when the cost `2^{L+m}` allows,
/// never fewer than two.
pub fn default_refinement_levels(m: u32, output_level: u32) -> Vec<u32> {
    let first = (m + 2).max(output_level);
    let cap = (first + 4).min((m + 4).max(26u32.saturating_sub(m)));
    let mut out = vec![first, first + 2];
    if first + 4 <= cap {
        out.push(first + 4);
    }
    out
}

fn validate_levels(levels: &[u32], output_level: u32) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::invalid("empty refinement level sequence"));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("refinement levels must increase"));
    }
    if output_level > levels[0] {
        return Err(Error::LevelMismatch(format!(
            "output level {output_level} finer than first refinement level {}",
            levels[0]
        )));
    }
    Ok(())
}

/// `max_{s<t} |X²_{s,t}|` per entry over all output-grid pairs, via the
/// running sums of the blocks. Level 1 is shared by both refinements, so
/// level-2 differences of composite increments are plain sums of block
/// differences.
fn max_pair_sum(blocks: &Array2<f64>, entry: usize) -> f64 {
    let (mut run, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
    let mut best = 0.0f64;
    for row in blocks.outer_iter() {
        run += row[entry];
        best = best.max(run - lo).max(hi - run);
        lo = lo.min(run);
        hi = hi.max(run);
    }
    best
}

/// `max_{s<t} ‖X²_{s,t}(fine) - X²_{s,t}(coarse)‖_max / max_{s<t} ‖X²_{s,t}(fine)‖_max`
/// over the output grid.
fn relative_cauchy(fine: &EnhancedPath, coarse: &EnhancedPath) -> f64 {
    let dd = fine.d * fine.d;
    let diff_blocks = &fine.lvl2 - &coarse.lvl2;
    let diff = (0..dd)
        .map(|e| max_pair_sum(&diff_blocks, e))
        .fold(0.0, f64::max);
    let mut scale = 0.0f64;
    for i in 0..fine.intervals() {
        fine.for_each_from(i, |_, x| {
            scale = x.lvl2.iter().fold(scale, |m, v| m.max(v.abs()));
        });
    }
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn report(levels: &[u32], output_level: u32, lifts: &[EnhancedPath], refine_tol: f64) -> RefinementReport {
    let cauchy: Vec<f64> = lifts
        .windows(2)
        .map(|w| relative_cauchy(&w[1], &w[0]))
        .collect();
    let converged = cauchy.last().map_or(true, |&c| c <= refine_tol);
    RefinementReport {
        levels: levels.to_vec(),
        output_level,
        cauchy,
        refine_tol,
        converged,
    }
}

/// Generic refinement: `sample(L)` gives the path on the level-`L` grid; each
/// is lifted linearly and folded onto `output_level`.
pub fn refine_lifts<F>(
    levels: &[u32],
    output_level: u32,
    refine_tol: f64,
    mut sample: F,
) -> Result<(EnhancedPath, RefinementReport)>
where
    F: FnMut(u32) -> Result<SampledPath>,
{
    validate_levels(levels, output_level)?;
    let mut lifts = Vec::with_capacity(levels.len());
    for &l in levels {
        let p = sample(l)?;
        if p.level() != l {
            return Err(Error::LevelMismatch(format!(
                "sampler returned level {} for {l}",
                p.level()
            )));
        }
        lifts.push(lift_linear(&p).restrict(output_level)?);
    }
    let rep = report(levels, output_level, &lifts, refine_tol);
    Ok((lifts.pop().expect("nonempty"), rep))
}

/// Level-2 lift of `W(m)` for one stream, as the linear-interpolation
/// refinement limit over `levels`, restricted to `output_level`.
pub fn level2_refined(
    inc_m: &DyadicIncrements,
    prim: &KernelPrimitive,
    levels: &[u32],
    output_level: u32,
) -> Result<(EnhancedPath, RefinementReport)> {
    let mut out = level2_refined_batch(prim, std::slice::from_ref(inc_m), levels, output_level, DEFAULT_REFINE_TOL)?;
    Ok(out.pop().expect("one stream"))
}

/// Batched form of [`level2_refined`]: all streams share the weight rows,
/// which are generated once per chunk, and each fine segment is folded into
/// its output block as soon as it is produced.
pub fn level2_refined_batch(
    prim: &KernelPrimitive,
    incs: &[DyadicIncrements],
    levels: &[u32],
    output_level: u32,
    refine_tol: f64,
) -> Result<Vec<(EnhancedPath, RefinementReport)>> {
    validate_levels(levels, output_level)?;
    let first = incs
        .first()
        .ok_or_else(|| Error::invalid("empty batch of increments"))?;
    if levels[0] < first.m() + 2 {
        return Err(Error::LevelMismatch(format!(
            "first refinement level {} must be at least m + 2 = {}",
            levels[0],
            first.m() + 2
        )));
    }
    let d = first.d();
    let n_out = 1usize << output_level;
    let mut per_level: Vec<Vec<EnhancedPath>> = Vec::with_capacity(levels.len());
    for &l in levels {
        let batch = WmBatch::new(prim, l, incs)?;
        let ratio = 1usize << (l - output_level);
        let mut acc: Vec<Vec<RoughIncrement>> =
            vec![vec![RoughIncrement::zero(d); n_out]; incs.len()];
        let mut prev = Array2::<f64>::zeros((1, incs.len() * d));
        batch.for_each_chunk(2048, |start, vals| {
            for r in 0..vals.nrows() {
                let row = start + r;
                if row > 0 {
                    let before = if r == 0 { prev.row(0) } else { vals.row(r - 1) };
                    let seg = &vals.row(r) - &before;
                    let blk = (row - 1) / ratio;
                    for (s_id, a) in acc.iter_mut().enumerate() {
                        a[blk].push_segment(seg.slice(s![s_id * d..(s_id + 1) * d]));
                    }
                }
            }
            prev.row_mut(0).assign(&vals.row(vals.nrows() - 1));
            Ok(())
        })?;
        per_level.push(
            acc.iter()
                .map(|blocks| EnhancedPath::from_blocks(output_level, blocks))
                .collect::<Result<_>>()?,
        );
    }
    let mut out = Vec::with_capacity(incs.len());
    for s_id in 0..incs.len() {
        let lifts: Vec<EnhancedPath> = per_level.iter().map(|v| v[s_id].clone()).collect();
        let rep = report(levels, output_level, &lifts, refine_tol);
        out.push((lifts.into_iter().last().expect("nonempty"), rep));
    }
    Ok(out)
}
