//! Brownian increments on dyadic grids and the approximants `B(m)`, `W(m)`.

mod increments;
mod path;
mod rng;

pub use increments::{sample_brownian, DyadicIncrements};
pub use path::{eval_bm, eval_wm, eval_wm_from_fine, SampledPath, WmBatch};
pub use rng::GaussianStream;
