//! Cloth dynamics from multi-view video.
//!
//! This crate recovers an explicit triangle-mesh representation of a moving
//! cloth from calibrated multi-view image sequences, without any mesh
//! supervision, and then trains a graph-network simulator on the recovered
//! motion. The pieces fit together as follows:
//!
//! * [`geometry`]: cloth meshes, per-face orthonormal frames, barycentric
//!   anchoring.
//! * [`splat`]: a surface-bound Gaussian splat representation and a
//!   deterministic software renderer with dual-position opacity.
//! * [`grad`]: reverse-mode gradients for the renderer, Adam, and a finite
//!   difference checker.
//! * [`losses`]: image and mesh losses (L1, SSIM, edge preservation) and
//!   evaluation metrics (PSNR, rollout RMSE, video RMSE).
//! * [`synth`]: a mass-spring cloth simulator and an independent textured
//!   triangle rasterizer used to build synthetic ground-truth datasets.
//! * [`dynamics`]: an encode-process-decode graph network trained to step
//!   cloth states forward in time.
//! * [`pipeline`]: the three training stages (appearance fit, per-frame mesh
//!   extraction, dynamics training) and full video prediction.
//! * [`cli`]: the `clods` command line driver.
//!
//! All numeric work is double precision; images are stored as linear RGB in
//! `[0, 1]`. Every entry point that consumes a seed is deterministic: the
//! same inputs and seed produce byte-identical outputs regardless of the
//! configured worker count.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod grad;
pub mod io;
pub mod losses;
pub mod pipeline;
pub mod plot;
pub mod splat;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{ClothMesh, FaceFrame};
pub use splat::{Camera, FrameSet, GaussianCloth, Image, OpacityNet};
pub use synth::Trajectory;
