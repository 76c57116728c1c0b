//! Minimal differentiable building blocks for the learned predictors.

mod params;
mod tape;

pub use params::{ParamId, ParamSpec, ParamStore};
pub use tape::{Tape, Var};
