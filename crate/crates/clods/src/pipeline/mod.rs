//! The three-stage training pipeline and the forward prediction loop.
//!
//! Stage 1 fits appearance (colors, scale multipliers, opacity network) to
//! the frame-0 views with node positions frozen. Stage 2 walks the video one
//! timestep at a time, optimizing per-node displacements so the re-rendered
//! cloth matches the images; the result is a mesh trajectory recovered
//! without any 3D supervision. Stage 3 trains the dynamics network on those
//! recovered trajectories. After training, [`dvc_forward`] rolls the
//! dynamics forward and renders the predicted cloth from every camera.

mod forward;
mod stage1;
mod stage2;
mod stage3;

pub use forward::{dvc_forward, perturb_initial_mesh, PerturbKind};
pub use stage1::stage1_fit;
pub use stage2::{stage2_extract, ExtractionResult};
pub use stage3::stage3_train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::EDGE_LOSS_GAMMA;
use crate::splat::{Camera, FrameSet};

/// Decorrelates per-stage randomness from the one master seed, so a single
/// seed change reshuffles every stage while reruns stay bit-identical.
pub(crate) fn stage_seed(master: u64, stream: u64) -> u64 {
    master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Checks that a frame set lines up with the camera list one to one:
/// same ids in the same order, matching resolutions.
pub(crate) fn check_views(frames: &FrameSet, cams: &[Camera]) -> Result<()> {
    frames.validate()?;
    if frames.images.len() != cams.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} images for {} cameras",
            frames.images.len(),
            cams.len()
        )));
    }
    for ((id, img), cam) in frames.camera_ids.iter().zip(&frames.images).zip(cams) {
        if *id != cam.id {
            return Err(Error::InvalidInput(format!(
                "frame set lists camera {id} where camera {} was given",
                cam.id
            )));
        }
        if img.width != cam.width || img.height != cam.height {
            return Err(Error::ShapeMismatch(format!(
                "camera {} is {}x{} but its image is {}x{}",
                cam.id, cam.width, cam.height, img.width, img.height
            )));
        }
    }
    Ok(())
}

/// Stage-1 appearance fit settings. One iteration is one full pass over the
/// view set (gradients accumulate across all views before the Adam step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    /// Maximum full passes over the views.
    pub view_passes: usize,
    pub lr_colors: f64,
    pub lr_net: f64,
    pub lr_scale_mult: f64,
    /// Stop when the loss improves by less than this over
    /// [`STAGE1_CONV_WINDOW`] consecutive passes.
    pub conv_eps: f64,
    /// Gaussian components sampled per mesh face.
    pub per_face: usize,
    /// Spherical-harmonic color degree (0 = flat RGB).
    pub sh_degree: u8,
    /// Feed realized world positions to the opacity net. Disabling either
    /// input is the ablation switch; both off is rejected.
    pub use_world: bool,
    /// Feed fixed material positions to the opacity net.
    pub use_mesh: bool,
    /// Photometric mix weight (`(1-lambda) L1 + lambda (1-SSIM)/2`).
    pub lambda: f64,
}

/// Passes without improvement tolerated before stage 1 stops early.
pub const STAGE1_CONV_WINDOW: usize = 50;

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            view_passes: 600,
            lr_colors: 5e-2,
            lr_net: 2e-3,
            lr_scale_mult: 5e-3,
            conv_eps: 1e-6,
            per_face: 2,
            sh_degree: 0,
            use_world: true,
            use_mesh: true,
            lambda: crate::losses::RENDER_LOSS_LAMBDA,
        }
    }
}

/// Stage-2 per-timestep extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    /// Adam iterations on the displacement field per timestep.
    pub inner_iters: usize,
    /// Displacement learning rate as a fraction of the mean rest edge
    /// length (cosine-decayed within each timestep's inner loop).
    pub lr_dx: f64,
    /// Weight of the edge-preservation term inside the geometry loss.
    pub gamma: f64,
    /// Stop a timestep early when the best loss improves by less than this
    /// over `conv_window` iterations.
    pub conv_eps: f64,
    pub conv_window: usize,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            inner_iters: 100,
            lr_dx: 0.05,
            gamma: EDGE_LOSS_GAMMA,
            conv_eps: 1e-6,
            conv_window: 10,
        }
    }
}

/// Settings for all three stages plus the master seed. Stage 3 reuses the
/// dynamics module's own config type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StageConfig {
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub stage3: crate::dynamics::TrainConfig,
    pub seed: u64,
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        let s1 = &self.stage1;
        if s1.view_passes == 0 {
            return Err(Error::InvalidParams("stage1 view_passes must be positive".into()));
        }
        for (name, lr) in [
            ("lr_colors", s1.lr_colors),
            ("lr_net", s1.lr_net),
            ("lr_scale_mult", s1.lr_scale_mult),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidParams(format!("stage1 {name} = {lr}")));
            }
        }
        if s1.per_face == 0 {
            return Err(Error::InvalidParams("stage1 per_face must be positive".into()));
        }
        if s1.sh_degree > 3 {
            return Err(Error::InvalidParams(format!("stage1 sh_degree {} > 3", s1.sh_degree)));
        }
        if !s1.use_world && !s1.use_mesh {
            return Err(Error::InvalidParams(
                "stage1 needs at least one opacity-net input branch".into(),
            ));
        }
        if !(0.0..=1.0).contains(&s1.lambda) {
            return Err(Error::InvalidParams(format!("stage1 lambda {} outside [0,1]", s1.lambda)));
        }
        let s2 = &self.stage2;
        if s2.inner_iters == 0 || s2.conv_window == 0 {
            return Err(Error::InvalidParams("stage2 iteration counts must be positive".into()));
        }
        if !(s2.lr_dx > 0.0 && s2.lr_dx.is_finite()) {
            return Err(Error::InvalidParams(format!("stage2 lr_dx = {}", s2.lr_dx)));
        }
        if !(s2.gamma >= 0.0 && s2.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!("stage2 gamma = {}", s2.gamma)));
        }
        self.stage3.validate()
    }
}
