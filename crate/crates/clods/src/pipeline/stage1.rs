//! Stage 1: fitting appearance to the first frame.
//!
//! Node positions are frozen at the initial mesh; what moves are the
//! spherical-harmonic colors, the per-component scale multipliers, and the
//! opacity network. Each pass renders every view, accumulates the
//! photometric gradient across them, and takes one Adam step per parameter
//! group. The best parameters seen are returned even when the pass budget
//! runs out before convergence.

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::ClothMesh;
use crate::grad::{adam_step, render_backward, AdamHyper, AdamState, GradBundle};
use crate::losses::{render_loss_grad, LossConfig};
use crate::pipeline::{check_views, stage_seed, StageConfig, STAGE1_CONV_WINDOW};
use crate::splat::{
    anchor_gaussians, render, Camera, FrameSet, GaussianCloth, OpacityNet, RenderOptions,
};

/// Floor keeping optimized scale multipliers inside their `(0, 1]` domain.
const SCALE_MULT_MIN: f64 = 1e-3;

/// Fits a fresh [`GaussianCloth`] and [`OpacityNet`] to the frame-0 views.
///
/// Returns the best-so-far appearance and the per-pass loss curve. The fit
/// stops early once the loss has not improved by `conv_eps` for
/// [`STAGE1_CONV_WINDOW`] consecutive passes; hitting the pass budget first
/// is not an error, the best iterate simply wins.
pub fn stage1_fit(
    mesh: &ClothMesh,
    frames_0: &FrameSet,
    cams: &[Camera],
    cfg: &StageConfig,
) -> Result<(GaussianCloth, OpacityNet, Vec<f64>)> {
    cfg.validate()?;
    check_views(frames_0, cams)?;
    let s1 = &cfg.stage1;

    let mut cloth = anchor_gaussians(mesh, s1.per_face, s1.sh_degree, stage_seed(cfg.seed, 1))?;
    let mut net =
        OpacityNet::standard(s1.use_world, s1.use_mesh, stage_seed(cfg.seed, 2))?;
    let opts = RenderOptions::default();
    let loss_cfg = LossConfig { lambda: s1.lambda, ..LossConfig::default() };

    let mut adam_colors = AdamState::new(cloth.colors.len());
    let mut adam_net = AdamState::new(net.params.len());
    let mut adam_scale = AdamState::new(cloth.scale_mult.len());
    let hyper_colors = AdamHyper::with_lr(s1.lr_colors);
    let hyper_net = AdamHyper::with_lr(s1.lr_net);
    let hyper_scale = AdamHyper::with_lr(s1.lr_scale_mult);

    let mut best_loss = f64::INFINITY;
    let mut best = (cloth.colors.clone(), cloth.scale_mult.clone(), net.params.clone());
    let mut stall = 0usize;
    let mut log = Vec::new();

    for _pass in 0..s1.view_passes {
        // Loss and gradient of the parameters as they stand, views in
        // parallel, folded in camera order so accumulation is deterministic.
        let per_view: Vec<(f64, GradBundle)> = cams
            .par_iter()
            .zip(&frames_0.images)
            .map(|(cam, target)| {
                let (img, tape) = render(&cloth, mesh, &net, cam, &opts)?;
                let (loss, d_img) = render_loss_grad(&img, target, &loss_cfg)?;
                let bundle = render_backward(&cloth, mesh, &net, cam, &tape, &d_img)?;
                Ok((loss, bundle))
            })
            .collect::<Result<_>>()?;
        let mut loss = 0.0;
        let mut grad = GradBundle::zeros(&cloth, mesh, &net);
        for (l, g) in &per_view {
            loss += l;
            grad.add(g)?;
        }
        let inv_views = 1.0 / cams.len() as f64;
        loss *= inv_views;
        grad.scale(inv_views);
        log.push(loss);

        // The measured loss belongs to the pre-step parameters, so snapshot
        // before stepping.
        if loss < best_loss {
            best = (cloth.colors.clone(), cloth.scale_mult.clone(), net.params.clone());
        }
        if loss + s1.conv_eps < best_loss {
            best_loss = loss;
            stall = 0;
        } else {
            best_loss = best_loss.min(loss);
            stall += 1;
            if stall >= STAGE1_CONV_WINDOW {
                break;
            }
        }

        adam_step(&mut cloth.colors, &grad.d_colors, &mut adam_colors, &hyper_colors)?;
        adam_step(&mut net.params, &grad.d_net_params, &mut adam_net, &hyper_net)?;
        adam_step(&mut cloth.scale_mult, &grad.d_scale_mult, &mut adam_scale, &hyper_scale)?;
        for m in &mut cloth.scale_mult {
            *m = m.clamp(SCALE_MULT_MIN, 1.0);
        }
    }

    (cloth.colors, cloth.scale_mult, net.params) = best;
    Ok((cloth, net, log))
}
