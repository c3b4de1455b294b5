//! Compositional differentiable volume rendering.
//!
//! A scene is modelled by one static radiance field and any number of
//! time-conditioned dynamic fields. All fields are sampled at shared points
//! along each ray and blended through per-point blending factors. Training
//! supervises the composition both at the captured (reference) cameras and at
//! randomly perturbed cameras whose ground truth is forward-warped from the
//! reference frame through its depth map.
//!
//! Module map:
//!
//! * [`geometry`]: pinhole cameras, rigid transforms, rays, projection and
//!   depth-based forward warping.
//! * [`fields`]: positional encoding, the MLP, static/dynamic fields and
//!   rigidly placed object instances.
//! * [`renderer`]: ray sampling and every volume-rendering reduction, with
//!   exact adjoints.
//! * [`losses`]: reconstruction, mask, per-field RGB, full RGB, blending and
//!   alpha objectives.
//! * [`diffengine`]: parameter vectors, a scalar reverse-mode tape, Adam and
//!   finite-difference gradient checking.
//! * [`data`]: scene configuration, the analytic synthetic scene generator,
//!   the on-disk dataset format and image metrics.
//! * [`model`], [`pipeline`], [`train`]: the trainable scene, the
//!   forward/backward render pass and the training loop.
//! * [`commands`], [`verify`]: the command-line entry points.

pub mod commands;
pub mod data;
pub mod diffengine;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod losses;
pub mod model;
pub mod pipeline;
pub mod renderer;
pub mod train;
pub mod verify;

pub use error::{NovaError, Result};
