//! Differentiation and optimization machinery.
//!
//! The render/loss pipeline carries hand-derived adjoints (see
//! [`crate::fields`], [`crate::renderer`], [`crate::losses`] and
//! [`crate::pipeline`]). This module holds what they share: the flat
//! [`ParameterVector`], the Adam optimizer, the finite-difference
//! [`grad_check`] harness, and a small scalar [`Tape`] for ad-hoc
//! computations.

mod adam;
mod gradcheck;
mod params;
mod tape;

pub use adam::{clip_global_norm, optimizer_step, AdamConfig, OptimizerState};
pub use gradcheck::{grad_check, FnObjective, GradCheckReport, Objective, Probe};
pub use params::ParameterVector;
pub use tape::{backward, sum, Gradients, Tape, Var};
