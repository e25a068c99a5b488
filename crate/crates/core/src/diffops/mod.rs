//! Differentiable array operators with hand-written backward passes.

mod graph;
pub mod gradcheck;
pub(crate) mod kernels;
mod param;

pub use graph::{sigmoid, Graph, Grid4, Var};
pub use gradcheck::{grad_check, grad_check_with_step, operator_suite, GradCheckReport};
pub use param::{to_f32_lattice, Init, Param, ParamId, ParamStore};

/// Slope of the hidden-layer leaky activation.
pub const LEAKY_SLOPE: f64 = 0.1;
