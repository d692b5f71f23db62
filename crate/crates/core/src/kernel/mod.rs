//! The Volterra kernel of fractional Brownian motion and its dyadic projections.

mod audit;
mod functions;
mod model;
mod projection;

pub use functions::{
    eval_dkdt, eval_f1, eval_f2, eval_k, eval_k_via_f1, kernel_increment_norm_sq,
    kernel_integral, kernel_norm_sq,
};
pub use model::{calibrate_ch, validate_hurst, HurstModel, HurstOptions, Regime, DEFAULT_QUAD_TOL};
pub use projection::{
    dyadic_step, eval_km, interval_index, l2_increment_error, l2_projection_error,
    upper_grid_point, KernelPrimitive, KernelWeightTable,
};
pub use audit::{bound_audit, latin_hypercube_pairs, AuditReport, BoundAudit, BoundId};
