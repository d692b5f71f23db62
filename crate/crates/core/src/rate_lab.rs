//! Convergence experiments at desk scale and their log2-rate fits.
//!
//! Streams are processed in parallel, but every reduction runs over the
//! per-stream results in stream order, so reports do not depend on the
//! number of worker threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::enhanced::{
    default_refinement_levels, level2_refined_batch, lift_linear, EnhancedPath, RefinementReport,
    DEFAULT_REFINE_TOL,
};
use crate::error::{Error, Result};
use crate::grr::{self, GrrCalibration};
use crate::holder::modulus_distance;
use crate::kernel::{
    dyadic_step, kernel_norm_sq, l2_increment_error, l2_projection_error, HurstModel, HurstOptions,
    KernelPrimitive, Regime,
};
use crate::sampling::{sample_brownian, DyadicIncrements, WmBatch};

/// Slope tolerance for two-sided rate checks.
pub const SLOPE_TOL: f64 = 0.3;
/// Largest tolerated fraction of streams whose refinement did not converge.
pub const MAX_NONCONVERGED: f64 = 0.10;
/// Fraction of streams that must be individually monotone in `dp-conv`.
pub const MIN_MONOTONE_FRACTION: f64 = 0.90;
pub const DEFAULT_OUTPUT_LEVEL: u32 = 8;

const INVARIANT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `log2(errors)` on `m_values`.
pub fn fit_slope(m_values: &[u32], errors: &[f64]) -> Result<SlopeFit> {
    if m_values.len() != errors.len() {
        return Err(Error::DimensionMismatch {
            expected: m_values.len(),
            found: errors.len(),
        });
    }
    if m_values.len() < 3 {
        return Err(Error::invalid("a rate fit needs at least three levels"));
    }
    if let Some(e) = errors.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::domain(format!("errors must be positive and finite, got {e}")));
    }
    let n = m_values.len() as f64;
    let xs: Vec<f64> = m_values.iter().map(|&m| m as f64).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all levels are equal, slope undefined"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SlopeFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// How the fitted slope enters the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeRule {
    /// `|slope - theory| <= tol`
    TwoSided,
    /// `slope <= theory + tol`
    OneSided,
    /// Reported only.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub experiment_id: String,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub p: Option<f64>,
    pub d: usize,
    pub m_values: Vec<u32>,
    pub errors: Vec<f64>,
    /// Standard errors of Monte Carlo means; empty for deterministic runs.
    pub std_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub theory_exponent: f64,
    pub tolerance: f64,
    pub slope_rule: SlopeRule,
    pub checks: Vec<Check>,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub m_ref: Option<u32>,
    pub nonconverged: usize,
    pub verdict: Verdict,
}

impl RateReport {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        experiment_id: &str,
        hurst: f64,
        p: Option<f64>,
        d: usize,
        m_values: &[u32],
        errors: Vec<f64>,
        std_errors: Vec<f64>,
        theory_exponent: f64,
        tolerance: f64,
        slope_rule: SlopeRule,
        mut checks: Vec<Check>,
    ) -> Result<Self> {
        let fit = fit_slope(m_values, &errors)?;
        let slope_ok = match slope_rule {
            SlopeRule::TwoSided => (fit.slope - theory_exponent).abs() <= tolerance,
            SlopeRule::OneSided => fit.slope <= theory_exponent + tolerance,
            SlopeRule::None => true,
        };
        if slope_rule != SlopeRule::None {
            checks.insert(
                0,
                Check::new(
                    "slope",
                    slope_ok,
                    format!(
                        "slope {:.4} vs {theory_exponent} ({:?}, tol {tolerance})",
                        fit.slope, slope_rule
                    ),
                ),
            );
        }
        let verdict = Verdict::from_bool(checks.iter().all(|c| c.passed));
        Ok(Self {
            experiment_id: experiment_id.to_string(),
            hurst,
            p,
            d,
            m_values: m_values.to_vec(),
            errors,
            std_errors,
            slope: fit.slope,
            intercept: fit.intercept,
            r2: fit.r2,
            theory_exponent,
            tolerance,
            slope_rule,
            checks,
            n_samples: 0,
            seed: None,
            m_ref: None,
            nonconverged: 0,
            verdict,
        })
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn validate_m_values(m_values: &[u32]) -> Result<()> {
    if m_values.len() < 3 {
        return Err(Error::invalid("need at least three levels m"));
    }
    if m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("levels m must be strictly increasing"));
    }
    if m_values[0] == 0 || *m_values.last().expect("nonempty") > 24 {
        return Err(Error::domain("levels m must lie in 1..=24"));
    }
    Ok(())
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn positive(errors: &[f64], what: &str) -> Result<()> {
    match errors.iter().position(|&e| !(e > 0.0)) {
        Some(i) => Err(Error::Invariant(format!(
            "{what} at index {i} is {} (not positive)",
            errors[i]
        ))),
        None => Ok(()),
    }
}

fn rate_rule(model: &HurstModel) -> (f64, SlopeRule) {
    match model.regime() {
        Regime::Rough => (-2.0 * model.hurst(), SlopeRule::TwoSided),
        Regime::Smooth => (-0.2, SlopeRule::OneSided),
    }
}

/// Squared-scale level-1 rate: `errors[m] = max_pairs d · ‖(K_t - K_s) - (K_m(t) - K_m(s))‖²`.
pub fn run_level1_rate(model: &HurstModel, pairs: &[(f64, f64)], m_values: &[u32], d: usize) -> Result<RateReport> {
    validate_m_values(m_values)?;
    if pairs.is_empty() {
        return Err(Error::invalid("no (s, t) pairs given"));
    }
    if d == 0 {
        return Err(Error::invalid("dimension d must be at least 1"));
    }
    if let Some(&(s, t)) = pairs.iter().find(|&&(s, t)| !(0.0 <= s && s < t && t <= 1.0)) {
        return Err(Error::domain(format!("pair ({s}, {t}) needs 0 <= s < t <= 1")));
    }
    let errors: Vec<f64> = m_values
        .par_iter()
        .map(|&m| {
            let mut worst = 0.0f64;
            for &(s, t) in pairs {
                worst = worst.max(d as f64 * l2_increment_error(s, t, m, model)?);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    positive(&errors, "level-1 error")?;
    let (theory, rule) = rate_rule(model);
    let tol = if rule == SlopeRule::TwoSided { SLOPE_TOL } else { 0.0 };
    RateReport::assemble("rate1", model.hurst(), None, d, m_values, errors, vec![], theory, tol, rule, vec![])
}

/// `errors[m] = max_times ∫|K(t,·) - K_m(t,·)|²`.
pub fn run_projection_rate(model: &HurstModel, times: &[f64], m_values: &[u32]) -> Result<RateReport> {
    validate_m_values(m_values)?;
    if times.is_empty() {
        return Err(Error::invalid("no evaluation times given"));
    }
    if let Some(t) = times.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::domain(format!("time {t} outside (0, 1]")));
    }
    let errors: Vec<f64> = m_values
        .par_iter()
        .map(|&m| {
            let mut worst = 0.0f64;
            for &t in times {
                worst = worst.max(l2_projection_error(t, m, model)?);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    positive(&errors, "projection error")?;
    let checks = vec![Check::new(
        "non_increasing",
        non_increasing(&errors),
        "projection errors non-increasing in m".into(),
    )];
    let (theory, rule) = rate_rule(model);
    let tol = if rule == SlopeRule::TwoSided { SLOPE_TOL } else { 0.0 };
    RateReport::assemble("proj-rate", model.hurst(), None, 1, m_values, errors, vec![], theory, tol, rule, checks)
}

/// Common settings of the Monte Carlo experiments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSettings {
    pub d: usize,
    pub n_samples: usize,
    pub m_values: Vec<u32>,
    pub m_ref: u32,
    pub seed: u64,
    pub output_level: u32,
    pub refine_tol: f64,
}

impl McSettings {
    fn validate(&self) -> Result<()> {
        validate_m_values(&self.m_values)?;
        if self.n_samples == 0 {
            return Err(Error::invalid("empty sample: n_samples must be at least 1"));
        }
        if self.d == 0 {
            return Err(Error::invalid("dimension d must be at least 1"));
        }
        let m_max = *self.m_values.last().expect("nonempty");
        if self.m_ref < m_max + 2 || self.m_ref > 24 {
            return Err(Error::domain(format!(
                "reference level {} must be in {}..=24",
                self.m_ref,
                m_max + 2
            )));
        }
        if !(1..=12).contains(&self.output_level) {
            return Err(Error::domain(format!(
                "output level {} must be in 1..=12",
                self.output_level
            )));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::domain("refinement tolerance must be positive"));
        }
        Ok(())
    }

    fn fine_increments(&self) -> Result<Vec<DyadicIncrements>> {
        (0..self.n_samples as u64)
            .into_par_iter()
            .map(|i| sample_brownian(self.m_ref, self.d, self.seed, i))
            .collect()
    }
}

/// Deterministic grid triples for Chen spot checks.
fn chen_triples(level: u32, count: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let n = 1usize << level;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = [rng.gen_range(0..=n), rng.gen_range(0..=n), rng.gen_range(0..=n)];
            v.sort_unstable();
            (v[0], v[1], v[2])
        })
        .collect()
}

fn assert_invariants(x: &EnhancedPath, stream: usize) -> Result<()> {
    x.check_shuffle(INVARIANT_TOL)?;
    let e = x.chen_defect(&chen_triples(x.level(), 8, stream as u64))?;
    if e > INVARIANT_TOL {
        return Err(Error::Invariant(format!(
            "Chen identity violated by {e:e} on stream {stream}"
        )));
    }
    Ok(())
}

/// Refined level-2 lifts of `W(m)` for every stream, with invariant checks.
pub fn refined_lifts(
    prim: &KernelPrimitive,
    incs: &[DyadicIncrements],
    output_level: u32,
    refine_tol: f64,
) -> Result<Vec<(EnhancedPath, RefinementReport)>> {
    let m = incs
        .first()
        .ok_or_else(|| Error::invalid("empty batch of increments"))?
        .m();
    let levels = default_refinement_levels(m, output_level);
    let out = level2_refined_batch(prim, incs, &levels, output_level, refine_tol)?;
    out.par_iter()
        .enumerate()
        .try_for_each(|(i, (x, _))| assert_invariants(x, i))?;
    Ok(out)
}

fn grid_index(t: f64, level: u32) -> Result<usize> {
    let x = t / dyadic_step(level);
    if !(0.0..=1.0).contains(&t) || x.fract() != 0.0 {
        return Err(Error::domain(format!("time {t} is not on the level-{level} grid")));
    }
    Ok(x as usize)
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn frob_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `½ ∫ |K_m(t,r) - K_m(s,r)|² dr` from the step rows.
fn half_kernel_increment_sq(prim: &KernelPrimitive, m: u32, s: f64, t: f64) -> Result<f64> {
    let n = 1usize << m;
    let (mut rt, mut rs) = (vec![0.0; n], vec![0.0; n]);
    prim.km_row(m, t, &mut rt)?;
    prim.km_row(m, s, &mut rs)?;
    Ok(0.5 * dyadic_step(m) * rt.iter().zip(&rs).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
}

/// Mean squared level-2 error of `W(m)` against `W(M_ref)` at one pair.
pub fn run_level2_rate(model: &HurstModel, set: &McSettings, pair: (f64, f64)) -> Result<RateReport> {
    set.validate()?;
    let h = model.hurst();
    if !(h > 0.25 && h < 0.5) {
        return Err(Error::domain(format!("level-2 rate needs H in (1/4, 1/2), got {h}")));
    }
    if set.d < 2 {
        return Err(Error::domain("level-2 rate needs d >= 2"));
    }
    let (i, j) = (grid_index(pair.0, set.output_level)?, grid_index(pair.1, set.output_level)?);
    if i >= j {
        return Err(Error::domain(format!("pair ({}, {}) needs s < t", pair.0, pair.1)));
    }
    let prim = KernelPrimitive::new(model)?;
    let fine = set.fine_increments()?;
    let refs = refined_lifts(&prim, &fine, set.output_level, set.refine_tol)?;
    let ref_incs: Vec<_> = refs
        .iter()
        .map(|(x, _)| x.increment_idx(i, j))
        .collect::<Result<_>>()?;
    let mut flagged: Vec<bool> = refs.iter().map(|(_, r)| !r.converged).collect();
    let (mut errors, mut ses) = (Vec::new(), Vec::new());
    let mut a2 = Vec::new();
    for &m in &set.m_values {
        let incs: Vec<_> = fine.iter().map(|f| f.coarsen(m)).collect::<Result<_>>()?;
        let lifts = refined_lifts(&prim, &incs, set.output_level, set.refine_tol)?;
        let mut sq = Vec::with_capacity(lifts.len());
        let mut half_l1 = Vec::with_capacity(lifts.len() * set.d);
        for (k, (x, rep)) in lifts.iter().enumerate() {
            flagged[k] |= !rep.converged;
            let xi = x.increment_idx(i, j)?;
            sq.push(frob_sq_diff(&xi.lvl2, &ref_incs[k].lvl2));
            half_l1.extend(xi.lvl1.iter().map(|w| 0.5 * w * w));
        }
        let (mean, se) = mean_and_se(&sq);
        errors.push(mean);
        ses.push(se);
        let exact = half_kernel_increment_sq(&prim, m, pair.0, pair.1)?;
        let (mc, mc_se) = mean_and_se(&half_l1);
        a2.push((m, exact, mc, mc_se));
    }
    positive(&errors, "level-2 error")?;
    let nonconverged = flagged.iter().filter(|&&f| f).count();
    let a2_ok = a2.iter().all(|&(_, e, mc, se)| (e - mc).abs() <= 3.0 * se);
    let a2_detail = a2
        .iter()
        .map(|(m, e, mc, se)| format!("m={m}: {e:.6} vs {mc:.6}±{se:.1e}"))
        .collect::<Vec<_>>()
        .join("; ");
    let checks = vec![
        Check::new(
            "strictly_decreasing",
            strictly_decreasing(&errors),
            "mean squared error strictly decreasing in m".into(),
        ),
        Check::new(
            "nonconvergence",
            nonconverged as f64 <= MAX_NONCONVERGED * set.n_samples as f64,
            format!("{nonconverged} of {} streams flagged", set.n_samples),
        ),
        Check::new("a2_identity", a2_ok, a2_detail),
    ];
    let mut r = RateReport::assemble(
        "rate2",
        h,
        None,
        set.d,
        &set.m_values,
        errors,
        ses,
        -0.1,
        0.0,
        SlopeRule::OneSided,
        checks,
    )?;
    r.n_samples = set.n_samples;
    r.seed = Some(set.seed);
    r.m_ref = Some(set.m_ref);
    r.nonconverged = nonconverged;
    Ok(r)
}

/// Lifts on the output grid. For `p < 2` only level 1 enters the distance,
/// and the level-1 increments between grid points are exact, so no
/// refinement is needed.
fn lifts_for_distance(
    prim: &KernelPrimitive,
    incs: &[DyadicIncrements],
    p: f64,
    set: &McSettings,
) -> Result<(Vec<EnhancedPath>, Vec<bool>)> {
    if p >= 2.0 {
        let out = refined_lifts(prim, incs, set.output_level, set.refine_tol)?;
        let flags = out.iter().map(|(_, r)| !r.converged).collect();
        Ok((out.into_iter().map(|(x, _)| x).collect(), flags))
    } else {
        let paths = WmBatch::new(prim, set.output_level, incs)?.paths()?;
        Ok((paths.iter().map(lift_linear).collect(), vec![false; incs.len()]))
    }
}

/// Per-stream and mean `d̃_p(W(m), W(M_ref))` on the output grid.
pub fn run_dp_convergence(model: &HurstModel, p: f64, set: &McSettings) -> Result<RateReport> {
    set.validate()?;
    let h = model.hurst();
    if !(p * h > 1.0) {
        return Err(Error::domain(format!("need pH > 1, got H = {h}, p = {p}")));
    }
    let range_ok = match model.regime() {
        Regime::Rough => p > 2.0 && p < 4.0,
        Regime::Smooth => p > 1.0 && p < 2.0,
    };
    if !range_ok {
        return Err(Error::domain(format!("p = {p} not admissible for H = {h}")));
    }
    let prim = KernelPrimitive::new(model)?;
    let fine = set.fine_increments()?;
    let (refs, mut flagged) = lifts_for_distance(&prim, &fine, p, set)?;
    let n = set.n_samples;
    let mut per_stream = vec![Vec::with_capacity(set.m_values.len()); n];
    let (mut errors, mut ses) = (Vec::new(), Vec::new());
    for &m in &set.m_values {
        let incs: Vec<_> = fine.iter().map(|f| f.coarsen(m)).collect::<Result<_>>()?;
        let (lifts, flags) = lifts_for_distance(&prim, &incs, p, set)?;
        let mut dists = Vec::with_capacity(n);
        for k in 0..n {
            flagged[k] |= flags[k];
            let dk = modulus_distance(&lifts[k], &refs[k], p, set.output_level)?.value;
            per_stream[k].push(dk);
            dists.push(dk);
        }
        let (mean, se) = mean_and_se(&dists);
        errors.push(mean);
        ses.push(se);
    }
    positive(&errors, "mean distance")?;
    let monotone = per_stream.iter().filter(|v| strictly_decreasing(v)).count();
    let nonconverged = flagged.iter().filter(|&&f| f).count();
    let checks = vec![
        Check::new(
            "mean_strictly_decreasing",
            strictly_decreasing(&errors),
            "mean distance strictly decreasing in m".into(),
        ),
        Check::new(
            "streams_monotone",
            monotone as f64 >= MIN_MONOTONE_FRACTION * n as f64,
            format!("{monotone} of {n} streams strictly decreasing"),
        ),
        Check::new(
            "nonconvergence",
            nonconverged as f64 <= MAX_NONCONVERGED * n as f64,
            format!("{nonconverged} of {n} streams flagged"),
        ),
    ];
    let mut r = RateReport::assemble(
        "dp-conv",
        h,
        Some(p),
        set.d,
        &set.m_values,
        errors,
        ses,
        0.0,
        0.0,
        SlopeRule::None,
        checks,
    )?;
    r.n_samples = n;
    r.seed = Some(set.seed);
    r.m_ref = Some(set.m_ref);
    r.nonconverged = nonconverged;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationRow {
    #[serde(rename = "H")]
    pub hurst: f64,
    pub c_h: f64,
    pub t: f64,
    pub variance: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub experiment_id: String,
    pub rows: Vec<NormalizationRow>,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub verdict: Verdict,
}

/// Calibrate `c_H` for each Hurst index and check `∫_0^t K(t,s)² ds = t^{2H}`.
pub fn run_calibration(hursts: &[f64], times: &[f64], opts: HurstOptions, tolerance: f64) -> Result<CalibrationReport> {
    if hursts.is_empty() || times.is_empty() {
        return Err(Error::invalid("calibration needs Hurst indices and times"));
    }
    let per_h: Vec<Vec<NormalizationRow>> = hursts
        .par_iter()
        .map(|&h| {
            let model = crate::kernel::calibrate_ch(h, opts)?;
            times
                .iter()
                .map(|&t| {
                    let variance = kernel_norm_sq(&model, t)?;
                    let target = t.powf(2.0 * h);
                    Ok(NormalizationRow {
                        hurst: h,
                        c_h: model.c_h(),
                        t,
                        variance,
                        rel_error: (variance - target).abs() / target,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<_> = per_h.into_iter().flatten().collect();
    let max_rel_error = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    Ok(CalibrationReport {
        experiment_id: "calibrate".into(),
        rows,
        tolerance,
        max_rel_error,
        verdict: Verdict::from_bool(max_rel_error <= tolerance),
    })
}

/// Settings of the certification run over a seed set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrrSettings {
    pub p: f64,
    /// Level of the approximant `W(m)`.
    pub m: u32,
    pub exponents: Vec<u32>,
    pub integral_level: u32,
    pub sup_level: u32,
    pub safety: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrrStream {
    pub stream_id: u64,
    pub cert: grr::CertReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrrCheckReport {
    pub experiment_id: String,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub p: f64,
    pub m: u32,
    pub m_ref: u32,
    pub seed: u64,
    pub n_samples: usize,
    pub exponents: Vec<u32>,
    pub integral_level: u32,
    pub sup_level: u32,
    pub safety: f64,
    pub committed: GrrCalibration,
    pub recalibrated: GrrCalibration,
    pub violations: usize,
    pub min_margin: f64,
    pub streams: Vec<GrrStream>,
    pub verdict: Verdict,
}

/// Pairs `(W(m), W(M_ref))` of refined lifts for the GRR runs.
pub fn grr_pairs(model: &HurstModel, set: &McSettings, m: u32) -> Result<Vec<(EnhancedPath, EnhancedPath)>> {
    let prim = KernelPrimitive::new(model)?;
    let fine = set.fine_increments()?;
    let refs = refined_lifts(&prim, &fine, set.output_level, set.refine_tol)?;
    let incs: Vec<_> = fine.iter().map(|f| f.coarsen(m)).collect::<Result<_>>()?;
    let approx = refined_lifts(&prim, &incs, set.output_level, set.refine_tol)?;
    Ok(approx.into_iter().zip(refs).map(|((x, _), (y, _))| (x, y)).collect())
}

/// Certify every pair of the seed set against `committed` and re-estimate
/// the constants. Passes when nothing is violated and every re-estimated
/// constant is within the safety factor of the committed one.
pub fn run_grr_check(
    model: &HurstModel,
    set: &McSettings,
    g: &GrrSettings,
    committed: &GrrCalibration,
) -> Result<GrrCheckReport> {
    if set.n_samples == 0 {
        return Err(Error::invalid("empty sample: n_samples must be at least 1"));
    }
    if g.integral_level > set.output_level || g.sup_level > set.output_level {
        return Err(Error::LevelMismatch(format!(
            "GRR grid levels must not exceed the output level {}",
            set.output_level
        )));
    }
    let pairs = grr_pairs(model, set, g.m)?;
    let mut streams = Vec::with_capacity(pairs.len());
    for (k, (x, y)) in pairs.iter().enumerate() {
        let cert = grr::certify(x, y, g.p, &g.exponents, g.integral_level, g.sup_level, committed, g.safety)?;
        streams.push(GrrStream {
            stream_id: k as u64,
            cert,
        });
    }
    let recalibrated = grr::calibrate_constants(&pairs, g.p, &g.exponents, g.integral_level, g.sup_level)?;
    let violations = streams.iter().map(|s| s.cert.violations).sum();
    let min_margin = streams
        .iter()
        .flat_map(|s| s.cert.margin_per_i.iter().chain(&s.cert.sum_margin_per_i))
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let k = grr::levels_for(g.p)?;
    let within = |c: f64, r: f64| r <= g.safety * c && c <= g.safety * r;
    let consistent = (0..k).all(|l| within(committed.c_g[l], recalibrated.c_g[l]))
        && (0..k - 1).all(|l| within(committed.c_f[l], recalibrated.c_f[l]));
    Ok(GrrCheckReport {
        experiment_id: "grr-check".into(),
        hurst: model.hurst(),
        p: g.p,
        m: g.m,
        m_ref: set.m_ref,
        seed: set.seed,
        n_samples: set.n_samples,
        exponents: g.exponents.clone(),
        integral_level: g.integral_level,
        sup_level: g.sup_level,
        safety: g.safety,
        committed: *committed,
        recalibrated,
        violations,
        min_margin,
        streams,
        verdict: Verdict::from_bool(violations == 0 && consistent),
    })
}

/// The committed calibration setting of the GRR constants.
pub fn grr_calibration_settings() -> (f64, McSettings, GrrSettings) {
    let set = McSettings {
        d: 2,
        n_samples: grr::CALIBRATION_STREAMS as usize,
        m_values: vec![5, 6, 7],
        m_ref: 11,
        seed: grr::CALIBRATION_SEED,
        output_level: DEFAULT_OUTPUT_LEVEL,
        refine_tol: DEFAULT_REFINE_TOL,
    };
    let g = GrrSettings {
        p: 2.6,
        m: 5,
        exponents: vec![34, 17],
        integral_level: DEFAULT_OUTPUT_LEVEL,
        sup_level: DEFAULT_OUTPUT_LEVEL,
        safety: grr::DEFAULT_SAFETY,
    };
    (0.4, set, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_geometric_decay() {
        let m: Vec<u32> = (3..=9).collect();
        let e: Vec<f64> = m.iter().map(|&m| 2f64.powf(-0.6 * m as f64)).collect();
        let f = fit_slope(&m, &e).unwrap();
        assert!((f.slope + 0.6).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_errors_have_zero_slope() {
        let f = fit_slope(&[1, 2, 3], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(f.slope, 0.0);
    }

    #[test]
    fn degenerate_fits_rejected() {
        assert!(fit_slope(&[2, 2, 2], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_slope(&[1, 2], &[1.0, 2.0]).is_err());
        assert!(fit_slope(&[1, 2, 3], &[1.0, 0.0, 3.0]).is_err());
    }

    #[test]
    fn settings_validation() {
        let mut s = McSettings {
            d: 2,
            n_samples: 0,
            m_values: vec![3, 4, 5],
            m_ref: 9,
            seed: 1,
            output_level: 5,
            refine_tol: 1e-3,
        };
        assert!(s.validate().is_err());
        s.n_samples = 1;
        assert!(s.validate().is_ok());
        s.m_ref = 6;
        assert!(s.validate().is_err());
    }

    #[test]
    fn grid_index_requires_grid_points() {
        assert_eq!(grid_index(0.5, 3).unwrap(), 4);
        assert!(grid_index(0.3, 3).is_err());
    }

    #[test]
    fn chen_triples_are_ordered() {
        for (a, b, c) in chen_triples(4, 50, 7) {
            assert!(a <= b && b <= c && c <= 16);
        }
    }
}
