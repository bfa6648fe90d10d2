//! Stage 2: extracting the mesh trajectory from the video.
//!
//! No 3D supervision enters here. For each timestep the previous extracted
//! mesh is warped by a per-node displacement field, initialized to zero and
//! optimized so the re-rendered splats match that step's images while edges
//! keep their rest lengths. The splats themselves never retrain; they ride
//! the mesh through their fixed barycentric anchors, which is what makes
//! the photometric gradient meaningful at every node.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{edge_lengths, mean_edge_length, ClothMesh};
use crate::grad::{adam_step, render_backward, AdamHyper, AdamState};
use crate::losses::{edge_loss_grad, l1_grad, psnr};
use crate::pipeline::{check_views, StageConfig};
use crate::splat::{render, Camera, FrameSet, GaussianCloth, OpacityNet, RenderOptions};
use crate::synth::Trajectory;

/// Positions this many cloth diagonals away from the origin mean the inner
/// optimization has left the scene; the step is aborted as a blowup.
const BLOWUP_DIAGONALS: f64 = 1e3;

/// The recovered motion and its per-step fit quality.
#[derive(Debug, Clone)]
pub struct ExtractionResult {
    /// Frame 0 is the input mesh pose; frame `t` matches `frames[t-1]`.
    pub trajectory: Trajectory,
    /// Final (best-iterate) geometry loss per extracted step.
    pub geometry_loss: Vec<f64>,
    /// Mean-over-views PSNR of the extracted pose per step.
    pub psnr: Vec<f64>,
}

impl ExtractionResult {
    pub fn validate(&self, mesh: &ClothMesh) -> Result<()> {
        self.trajectory.validate()?;
        if self.trajectory.num_nodes() != mesh.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "extracted {} nodes, mesh has {}",
                self.trajectory.num_nodes(),
                mesh.num_nodes()
            )));
        }
        let steps = self.trajectory.len().saturating_sub(1);
        if self.geometry_loss.len() != steps || self.psnr.len() != steps {
            return Err(Error::ShapeMismatch(format!(
                "{} loss and {} psnr entries for {steps} extracted steps",
                self.geometry_loss.len(),
                self.psnr.len()
            )));
        }
        if !self.geometry_loss.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite extraction loss".into()));
        }
        Ok(())
    }
}

/// Recovers the cloth trajectory behind `frames` by per-timestep
/// photometric descent on node displacements.
///
/// `frames[i]` is the observed frame set at timestep `i + 1`; frame 0 is
/// `mesh_0`'s own pose (that is what stage 1 fitted against). Pinned nodes
/// stay clamped to their frame-0 positions throughout. `dt` only stamps the
/// output trajectory.
pub fn stage2_extract(
    cloth: &GaussianCloth,
    net: &OpacityNet,
    mesh_0: &ClothMesh,
    frames: &[FrameSet],
    cams: &[Camera],
    dt: f64,
    cfg: &StageConfig,
) -> Result<ExtractionResult> {
    cfg.validate()?;
    cloth.validate(mesh_0)?;
    for fs in frames {
        check_views(fs, cams)?;
    }
    let s2 = &cfg.stage2;
    let k = mesh_0.num_nodes();
    let rest = edge_lengths(&mesh_0.world_pos, &mesh_0.edges);
    let lr0 = s2.lr_dx * mean_edge_length(&mesh_0.world_pos, &mesh_0.edges);
    let bound = BLOWUP_DIAGONALS * mesh_0.bbox_diagonal().max(1e-6);
    let opts = RenderOptions::default();

    let mut work = mesh_0.clone();
    let mut x_tilde = mesh_0.world_pos.clone();
    let mut traj = vec![x_tilde.clone()];
    let mut losses = Vec::with_capacity(frames.len());
    let mut psnrs = Vec::with_capacity(frames.len());

    for (idx, fs) in frames.iter().enumerate() {
        let step = idx + 1;
        let blown = |what: &str| {
            eprintln!("extraction diverged at step {step}: {what}");
            Error::NumericBlowup { step }
        };
        let mut dx = vec![0.0; 3 * k];
        let mut adam = AdamState::new(3 * k);
        let mut best_loss = f64::INFINITY;
        let mut best_dx = dx.clone();
        let mut hist: Vec<f64> = Vec::with_capacity(s2.inner_iters);

        for iter in 0..s2.inner_iters {
            for (i, p) in work.world_pos.iter_mut().enumerate() {
                *p = x_tilde[i] + Vector3::new(dx[3 * i], dx[3 * i + 1], dx[3 * i + 2]);
            }
            if work.world_pos.iter().any(|p| !(p.norm() < bound)) {
                return Err(blown("node positions left the scene"));
            }

            let per_view: Vec<(f64, crate::grad::GradBundle)> = cams
                .par_iter()
                .zip(&fs.images)
                .map(|(cam, target)| {
                    let (img, tape) = render(cloth, &work, net, cam, &opts)?;
                    let (loss, d_img) = l1_grad(&img, target)?;
                    let bundle = render_backward(cloth, &work, net, cam, &tape, &d_img)?;
                    Ok((loss, bundle))
                })
                .collect::<Result<_>>()?;
            let inv_views = 1.0 / cams.len() as f64;
            let (edge_l, edge_g) = edge_loss_grad(&work.world_pos, &mesh_0.edges, &rest)?;
            let mut loss = s2.gamma * edge_l;
            let mut d_pos = edge_g;
            d_pos.iter_mut().for_each(|g| *g *= s2.gamma);
            for (l, bundle) in &per_view {
                loss += l * inv_views;
                for (acc, g) in d_pos.iter_mut().zip(&bundle.d_node_pos) {
                    *acc += g * inv_views;
                }
            }
            if !loss.is_finite() {
                return Err(blown("geometry loss is not finite"));
            }
            if std::env::var_os("CLODS_DEBUG_STAGE2").is_some() {
                let gnorm: f64 = d_pos.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
                eprintln!("step {step} iter {iter} loss {loss:.6e} gnorm {gnorm:.3e}");
            }

            // The loss belongs to the current dx, so snapshot the best
            // iterate before the step mutates it.
            if loss < best_loss {
                best_loss = loss;
                best_dx.copy_from_slice(&dx);
            }
            // Stop once progress over the trailing window dries up. Adam's
            // bias-corrected opening steps move every coordinate by a full
            // learning rate, which bumps the edge term before the photometric
            // pull wins out, so a stop is only trusted after the loss has
            // worked its way back down to where the iterate started.
            hist.push(loss);
            if iter >= s2.conv_window
                && loss <= hist[0] + s2.conv_eps
                && hist[iter - s2.conv_window] - loss < s2.conv_eps
            {
                break;
            }

            let mut grad = vec![0.0; 3 * k];
            for (i, g) in d_pos.iter().enumerate() {
                if !mesh_0.is_pinned(i) {
                    grad[3 * i] = g.x;
                    grad[3 * i + 1] = g.y;
                    grad[3 * i + 2] = g.z;
                }
            }
            // Warmup tames Adam's full-rate opening steps: without it every
            // node jolts by lr at once and the edge term spikes.
            let warmup = (s2.inner_iters / 10).max(1);
            let ramp = ((iter + 1) as f64 / warmup as f64).min(1.0);
            let lr = lr0 * ramp * 0.5
                * (1.0 + (std::f64::consts::PI * iter as f64 / s2.inner_iters as f64).cos());
            adam_step(&mut dx, &grad, &mut adam, &AdamHyper::with_lr(lr))?;
            for p in 0..k {
                if mesh_0.is_pinned(p) {
                    dx[3 * p..3 * p + 3].fill(0.0);
                }
            }
        }
        if !best_loss.is_finite() {
            return Err(blown("no finite iterate"));
        }

        for (i, x) in x_tilde.iter_mut().enumerate() {
            *x += Vector3::new(best_dx[3 * i], best_dx[3 * i + 1], best_dx[3 * i + 2]);
        }
        work.world_pos.copy_from_slice(&x_tilde);
        let view_psnr: Vec<f64> = cams
            .par_iter()
            .zip(&fs.images)
            .map(|(cam, target)| {
                let (img, _) = render(cloth, &work, net, cam, &opts)?;
                psnr(&img, target)
            })
            .collect::<Result<_>>()?;
        psnrs.push(view_psnr.iter().sum::<f64>() / view_psnr.len() as f64);
        losses.push(best_loss);
        traj.push(x_tilde.clone());
    }

    let result = ExtractionResult {
        trajectory: Trajectory::new(traj, dt),
        geometry_loss: losses,
        psnr: psnrs,
    };
    result.validate(mesh_0)?;
    Ok(result)
}
