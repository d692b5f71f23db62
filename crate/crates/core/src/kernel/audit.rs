//! Empirical audit of the kernel majorants: ratios of `|K|`, `|∂K/∂s|` and
//! `|∂²K/∂t∂s|` to their power-law bounds over a Latin-hypercube sample.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;

use super::functions::{eval_dkdt, eval_k};
use super::model::{HurstModel, Regime};

const CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundId {
    /// `|K| ≲ s^{H-1/2}` on `(0, t/2)`, `(t-s)^{H-1/2}` on `[t/2, t)`; H < 1/2.
    A8,
    /// `|∂K/∂s| ≲ s^{H-3/2}`, resp. `(t-s)^{H-3/2}`; H < 1/2.
    A9,
    /// `|∂²K/∂t∂s| ≲ (t-s)^{H-3/2} s^{-1}`, resp. `(t-s)^{H-5/2}`; H < 1/2.
    A10,
    /// `|K| ≲ (t-s)^{H-1/2}` on `(0, t/2)`, `s^{H-1/2}` on `[t/2, t)`; H > 1/2.
    A11,
    /// `|∂K/∂s| ≲ (t-s)^{2H-1} s^{-(H+1/2)}`, resp. `(t-s)^{H-3/2}`; H > 1/2.
    A12,
}

impl BoundId {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundId::A8 => "a8",
            BoundId::A9 => "a9",
            BoundId::A10 => "a10",
            BoundId::A11 => "a11",
            BoundId::A12 => "a12",
        }
    }

    pub fn for_regime(regime: Regime) -> &'static [BoundId] {
        match regime {
            Regime::Rough => &[BoundId::A8, BoundId::A9, BoundId::A10],
            Regime::Smooth => &[BoundId::A11, BoundId::A12],
        }
    }

    /// The power-law majorant with unit constant.
    pub fn majorant(self, hurst: f64, t: f64, s: f64) -> f64 {
        let near = s >= 0.5 * t;
        let gap = t - s;
        match self {
            BoundId::A8 => {
                if near {
                    gap.powf(hurst - 0.5)
                } else {
                    s.powf(hurst - 0.5)
                }
            }
            BoundId::A9 => {
                if near {
                    gap.powf(hurst - 1.5)
                } else {
                    s.powf(hurst - 1.5)
                }
            }
            BoundId::A10 => gap.powf(hurst - 1.5) * if near { gap.recip() } else { s.recip() },
            BoundId::A11 => {
                if near {
                    s.powf(hurst - 0.5)
                } else {
                    gap.powf(hurst - 0.5)
                }
            }
            BoundId::A12 => {
                gap.powf(2.0 * hurst - 1.0) * if near { gap } else { s }.powf(-(hurst + 0.5))
            }
        }
    }

    /// The bounded quantity: `|K|`, or a finite-difference derivative.
    pub fn quantity(self, model: &HurstModel, t: f64, s: f64) -> Result<f64> {
        // Relative step, kept well inside (0, t).
        let step = 1e-4 * s.min(t - s);
        Ok(match self {
            BoundId::A8 | BoundId::A11 => eval_k(t, s, model)?.abs(),
            BoundId::A9 | BoundId::A12 => {
                ((eval_k(t, s + step, model)? - eval_k(t, s - step, model)?) / (2.0 * step)).abs()
            }
            BoundId::A10 => {
                ((eval_dkdt(t, s + step, model)? - eval_dkdt(t, s - step, model)?) / (2.0 * step))
                    .abs()
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundAudit {
    pub bound_id: &'static str,
    pub regime: &'static str,
    pub max_ratio: f64,
    pub sample_size: usize,
    /// Same statistic on an independent design of half the size.
    pub half_sample_max_ratio: f64,
    pub argmax: (f64, f64),
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub hurst: f64,
    pub bounds: Vec<BoundAudit>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.bounds.iter().all(|b| b.stable)
    }
}

/// Latin-hypercube design of `(t, s)` with `0 < s < t <= 1`, both clipped
/// `CLIP` away from the degenerate edges `s = 0` and `s = t`.
pub fn latin_hypercube_pairs(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    cols.shuffle(&mut rng);
    rows.iter()
        .zip(&cols)
        .map(|(&i, &j)| {
            let t = ((i as f64 + rng.gen::<f64>()) / n as f64).max(4.0 * CLIP);
            let frac = (j as f64 + rng.gen::<f64>()) / n as f64;
            let s = (frac * t).clamp(CLIP, t - CLIP);
            (t, s)
        })
        .collect()
}

fn max_ratio(model: &HurstModel, bound: BoundId, pairs: &[(f64, f64)]) -> Result<(f64, (f64, f64))> {
    let mut best = (0.0, (0.0, 0.0));
    for &(t, s) in pairs {
        let r = bound.quantity(model, t, s)? / bound.majorant(model.hurst(), t, s);
        if !(r <= best.0) {
            best = (r, (t, s));
        }
    }
    Ok(best)
}

/// Audit every bound of the model's regime on `sample_size` points.
pub fn bound_audit(model: &HurstModel, sample_size: usize) -> Result<AuditReport> {
    let full = latin_hypercube_pairs(sample_size, 0x5eed_a0d1);
    let half = latin_hypercube_pairs((sample_size / 2).max(1), 0x5eed_a0d2);
    let mut bounds = Vec::new();
    for &b in BoundId::for_regime(model.regime()) {
        let (max_full, argmax) = max_ratio(model, b, &full)?;
        let (max_half, _) = max_ratio(model, b, &half)?;
        let stable = max_full.is_finite() && max_half.is_finite() && max_full <= 2.0 * max_half;
        bounds.push(BoundAudit {
            bound_id: b.as_str(),
            regime: model.regime().as_str(),
            max_ratio: max_full,
            sample_size,
            half_sample_max_ratio: max_half,
            argmax,
            stable,
        });
    }
    Ok(AuditReport {
        hurst: model.hurst(),
        bounds,
    })
}
