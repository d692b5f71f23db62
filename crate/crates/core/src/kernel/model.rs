use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_singular, QuadOptions};

use super::functions::shape_kernel;

/// Default relative tolerance for kernel quadratures.
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

/// Which side of 1/2 the Hurst parameter sits on; the kernel has a
/// different closed representation in each regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// H < 1/2
    Rough,
    /// H > 1/2
    Smooth,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Rough => "rough",
            Regime::Smooth => "smooth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstOptions {
    pub quad_tol: f64,
    /// Accept H in (0, 1/4] as well; the kernel is well defined there but
    /// the level-2 theory is not.
    pub allow_extended: bool,
}

impl Default for HurstOptions {
    fn default() -> Self {
        Self {
            quad_tol: DEFAULT_QUAD_TOL,
            allow_extended: false,
        }
    }
}

/// A Hurst parameter together with the kernel constant `c_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstModel {
    hurst: f64,
    c_h: f64,
    quad_tol: f64,
}

pub fn validate_hurst(hurst: f64, allow_extended: bool) -> Result<Regime> {
    if !hurst.is_finite() || hurst <= 0.0 || hurst >= 1.0 {
        return Err(Error::domain(format!("H = {hurst} outside (0, 1)")));
    }
    if hurst == 0.5 {
        return Err(Error::domain("H = 1/2 has no Volterra kernel of this form"));
    }
    if !allow_extended && hurst <= 0.25 {
        return Err(Error::domain(format!(
            "H = {hurst} outside the working range (1/4, 1/2) ∪ (1/2, 1); pass allow_extended to override"
        )));
    }
    Ok(if hurst < 0.5 {
        Regime::Rough
    } else {
        Regime::Smooth
    })
}

impl HurstModel {
    /// A model with an explicit kernel constant, skipping calibration.
    pub fn with_constant(hurst: f64, c_h: f64, opts: HurstOptions) -> Result<Self> {
        validate_hurst(hurst, opts.allow_extended)?;
        if !(c_h > 0.0 && c_h.is_finite()) {
            return Err(Error::domain(format!("c_H = {c_h} must be positive")));
        }
        if !(opts.quad_tol > 0.0 && opts.quad_tol < 1e-3) {
            return Err(Error::domain(format!(
                "quad_tol = {} must lie in (0, 1e-3)",
                opts.quad_tol
            )));
        }
        Ok(Self {
            hurst,
            c_h,
            quad_tol: opts.quad_tol,
        })
    }

    /// Calibrated model with default options.
    pub fn calibrate(hurst: f64) -> Result<Self> {
        calibrate_ch(hurst, HurstOptions::default())
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn regime(&self) -> Regime {
        if self.hurst < 0.5 {
            Regime::Rough
        } else {
            Regime::Smooth
        }
    }

    /// `H - 1/2`
    pub fn h_half(&self) -> f64 {
        self.hurst - 0.5
    }

    /// Renormalise so that `∫_0^1 K(1,s)^2 ds = 1` under the current constant.
    pub fn recalibrate(&self) -> Result<Self> {
        let norm = unit_norm_sq(self.hurst, self.quad_tol)? * self.c_h * self.c_h;
        Ok(Self {
            c_h: self.c_h / norm.sqrt(),
            ..*self
        })
    }

    /// `∫_0^1 K(1,s)^2 ds` for this model.
    pub fn unit_variance(&self) -> Result<f64> {
        Ok(unit_norm_sq(self.hurst, self.quad_tol)? * self.c_h * self.c_h)
    }

    pub(crate) fn outer_opts(&self) -> QuadOptions {
        QuadOptions::with_rel_tol(self.quad_tol)
    }

    /// Tolerance for integrals nested inside kernel evaluations.
    pub(crate) fn inner_opts(&self) -> QuadOptions {
        QuadOptions::with_rel_tol((self.quad_tol * 1e-3).max(2e-13))
    }

    /// Endpoint exponent of `K(t,·)` at `s = 0`.
    pub(crate) fn origin_exponent(&self) -> f64 {
        -(self.h_half().abs())
    }
}

/// `∫_0^1 shape(1,s)^2 ds` where `shape` is the kernel with `c_H = 1`.
fn unit_norm_sq(hurst: f64, quad_tol: f64) -> Result<f64> {
    let inner = QuadOptions::with_rel_tol((quad_tol * 1e-3).max(2e-13));
    let opts = QuadOptions::with_rel_tol(quad_tol * 0.1);
    let alpha0 = -2.0 * (hurst - 0.5).abs();
    let alpha1 = 2.0 * hurst - 1.0;
    let r = integrate_singular(
        |s| {
            let k = shape_kernel(hurst, 1.0, s, &inner).unwrap_or(f64::NAN);
            k * k
        },
        0.0,
        1.0,
        Some(alpha0),
        Some(alpha1),
        &opts,
    )?;
    Ok(r.value)
}

/// Fix `c_H` by the unit-variance normalisation `∫_0^1 K(1,s)^2 ds = 1`.
/// `K` is linear in `c_H`, so this is a single division.
pub fn calibrate_ch(hurst: f64, opts: HurstOptions) -> Result<HurstModel> {
    validate_hurst(hurst, opts.allow_extended)?;
    let norm = unit_norm_sq(hurst, opts.quad_tol)?;
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::domain(format!(
            "kernel norm {norm} is not positive for H = {hurst}"
        )));
    }
    HurstModel::with_constant(hurst, 1.0 / norm.sqrt(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_is_rejected() {
        assert!(HurstModel::calibrate(0.5).is_err());
        assert!(HurstModel::calibrate(0.2).is_err());
        assert!(HurstModel::calibrate(1.0).is_err());
        let ext = HurstOptions {
            allow_extended: true,
            ..HurstOptions::default()
        };
        assert!(calibrate_ch(0.2, ext).is_ok());
    }

    #[test]
    fn calibration_normalises_unit_variance() {
        for h in [0.3, 0.45, 0.55, 0.75] {
            let m = HurstModel::calibrate(h).unwrap();
            assert!(m.c_h() > 0.0 && m.c_h().is_finite());
            let v = m.unit_variance().unwrap();
            assert!((v - 1.0).abs() <= 10.0 * m.quad_tol(), "H={h}: {v}");
        }
    }

    #[test]
    fn calibration_is_idempotent() {
        let m = HurstModel::calibrate(0.35).unwrap();
        let again = m.recalibrate().unwrap();
        assert!((again.c_h() - m.c_h()).abs() <= m.quad_tol() * m.c_h());
    }

    #[test]
    fn constant_must_be_positive() {
        assert!(HurstModel::with_constant(0.3, 0.0, HurstOptions::default()).is_err());
        assert!(HurstModel::with_constant(0.3, -1.0, HurstOptions::default()).is_err());
    }
}
