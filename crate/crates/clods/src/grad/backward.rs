//! The renderer's backward pass.
//!
//! Given `dL/dpixels`, produces `dL/d(node positions, net params, colors,
//! scale multipliers)`. The per-pixel phase walks each pixel's recorded
//! contributions in reverse, turning the compositing recurrence into
//! per-component gradients on opacity, 2D mean, inverse covariance, and
//! color. The per-component phase then pulls those through the projection,
//! the face frame, the opacity net, and the SH basis. All of it mirrors the
//! forward computations in `splat` term by term.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ClothMesh;
use crate::grad::GradBundle;
use crate::splat::{
    eval_sh_jacobian, projection_jacobian, realize, world_covariance, Camera, GaussianCloth,
    OpacityNet, RenderTape,
};

/// Pixel-phase accumulators for one composited component.
#[derive(Debug, Clone, Copy, Default)]
struct SlotAcc {
    d_alpha: f64,
    d_mean: Vector2<f64>,
    /// Gradients on the stored (a, b, c) of the inverse 2D covariance.
    d_inv: [f64; 3],
    d_rgb: [f64; 3],
}

impl SlotAcc {
    fn add(&mut self, o: &SlotAcc) {
        self.d_alpha += o.d_alpha;
        self.d_mean += o.d_mean;
        for k in 0..3 {
            self.d_inv[k] += o.d_inv[k];
            self.d_rgb[k] += o.d_rgb[k];
        }
    }
}

/// Row blocks are fixed so the merge order (and therefore every last bit of
/// the result) is independent of the worker count.
const ACC_CHUNKS: usize = 16;

/// Exact gradients of `sum(d_image * pixels)` for the scene the tape was
/// recorded from, holding sort order and footprint membership fixed.
///
/// `d_image` is laid out like `Image::data`. The scene arguments must be the
/// ones the tape was rendered from; shape disagreements are rejected, value
/// disagreements are the caller's bug.
pub fn render_backward(
    cloth: &GaussianCloth,
    mesh: &ClothMesh,
    net: &OpacityNet,
    camera: &Camera,
    tape: &RenderTape,
    d_image: &[f64],
) -> Result<GradBundle> {
    if d_image.len() != tape.width * tape.height * 3 {
        return Err(Error::TapeMismatch(format!(
            "gradient image has {} values, tape is {}x{}",
            d_image.len(),
            tape.width,
            tape.height
        )));
    }
    if camera.width != tape.width || camera.height != tape.height {
        return Err(Error::TapeMismatch("camera resolution differs from tape".into()));
    }
    if tape.comps.iter().any(|c| c.comp as usize >= cloth.num_components()) {
        return Err(Error::TapeMismatch("tape references components beyond the cloth".into()));
    }
    if !d_image.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite gradient image".into()));
    }

    let mut bundle = GradBundle::zeros(cloth, mesh, net);
    if tape.comps.is_empty() {
        return Ok(bundle);
    }

    // Pixel phase: reverse-composite every pixel into per-slot accumulators,
    // in fixed row blocks merged in block order.
    let n_slots = tape.comps.len();
    let rows_per_chunk = tape.height.div_ceil(ACC_CHUNKS);
    let slot_accs: Vec<Vec<SlotAcc>> = (0..ACC_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut accs = vec![SlotAcc::default(); n_slots];
            let y_end = ((chunk + 1) * rows_per_chunk).min(tape.height);
            let mut t_prefix: Vec<f64> = Vec::new();
            for y in chunk * rows_per_chunk..y_end {
                for x in 0..tape.width {
                    let p = y * tape.width + x;
                    let gc = [d_image[p * 3], d_image[p * 3 + 1], d_image[p * 3 + 2]];
                    if gc == [0.0, 0.0, 0.0] {
                        continue;
                    }
                    let contribs = &tape.contribs
                        [tape.px_start[p] as usize..tape.px_start[p + 1] as usize];
                    // Forward transmittance prefixes, then the reverse sweep.
                    t_prefix.clear();
                    let mut t = 1.0;
                    for &(slot, g) in contribs {
                        t_prefix.push(t);
                        t *= 1.0 - tape.comps[slot as usize].alpha * g;
                    }
                    let bg = tape.background;
                    // Everything composited behind the current contribution,
                    // weighted by gc; grows as the sweep walks frontward.
                    let mut behind = tape.t_final[p]
                        * (gc[0] * bg[0] + gc[1] * bg[1] + gc[2] * bg[2]);
                    let cx = x as f64 + 0.5;
                    let cy = y as f64 + 0.5;
                    for (j, &(slot, g)) in contribs.iter().enumerate().rev() {
                        let comp = &tape.comps[slot as usize];
                        let alpha_p = comp.alpha * g;
                        let tj = t_prefix[j];
                        let gdot =
                            gc[0] * comp.rgb[0] + gc[1] * comp.rgb[1] + gc[2] * comp.rgb[2];
                        let d_alpha_p = tj * gdot - behind / (1.0 - alpha_p);
                        let acc = &mut accs[slot as usize];
                        let w = tj * alpha_p;
                        acc.d_rgb[0] += w * gc[0];
                        acc.d_rgb[1] += w * gc[1];
                        acc.d_rgb[2] += w * gc[2];
                        acc.d_alpha += g * d_alpha_p;
                        let dg = comp.alpha * d_alpha_p;
                        let dq = -0.5 * g * dg;
                        let dx = cx - comp.mean2d.x;
                        let dy = cy - comp.mean2d.y;
                        let [a, b, c] = comp.cov_inv;
                        acc.d_inv[0] += dq * dx * dx;
                        acc.d_inv[1] += dq * 2.0 * dx * dy;
                        acc.d_inv[2] += dq * dy * dy;
                        acc.d_mean.x += dq * -2.0 * (a * dx + b * dy);
                        acc.d_mean.y += dq * -2.0 * (b * dx + c * dy);
                        behind += w * gdot;
                    }
                }
            }
            accs
        })
        .collect();
    let mut accs = vec![SlotAcc::default(); n_slots];
    for chunk in &slot_accs {
        for (a, c) in accs.iter_mut().zip(chunk) {
            a.add(c);
        }
    }

    // Component phase: recompute forward intermediates per slot; push the
    // accumulated gradients down to nodes and parameters.
    let realized = realize(cloth, mesh)?;
    let cam_pos = camera.position();
    let w_rot = camera.rotation();
    let ncoef = cloth.num_coeffs();
    let mut frames: Vec<Option<crate::geometry::FaceFrame>> = vec![None; mesh.num_faces()];
    for (slot, acc) in accs.iter().enumerate() {
        let comp = &tape.comps[slot];
        let i = comp.comp as usize;
        let mu_w = realized.mu_w[i];

        // Colors and the view direction.
        let v = mu_w - cam_pos;
        let dist = v.norm();
        let dir = v / dist;
        let (basis, basis_grad) = eval_sh_jacobian(cloth.sh_degree, &dir);
        let mut d_dir = Vector3::zeros();
        for ch in 0..3 {
            if acc.d_rgb[ch] == 0.0 {
                continue;
            }
            for k in 0..ncoef {
                let cidx = cloth.color_index(i, ch, k);
                bundle.d_colors[cidx] += acc.d_rgb[ch] * basis[k];
                d_dir += basis_grad[k] * (acc.d_rgb[ch] * cloth.colors[cidx]);
            }
        }
        let mut g_mu_w = (d_dir - dir * dir.dot(&d_dir)) / dist;

        // Opacity net.
        let cache = net.forward_cached(&mu_w, &realized.mu_m[i]);
        let (d_mu_w_net, _d_mu_m) = net.backward(&cache, acc.d_alpha, &mut bundle.d_net_params);
        g_mu_w += d_mu_w_net;

        // Inverse covariance back to the projected covariance:
        // d(inv)/d(cov) adjoint is -M G M with M the inverse itself.
        let [a, b, c] = comp.cov_inv;
        let m_inv = Matrix2::new(a, b, b, c);
        let g_m = Matrix2::new(acc.d_inv[0], acc.d_inv[1] / 2.0, acc.d_inv[1] / 2.0, acc.d_inv[2]);
        let g_cov2d = -(m_inv * g_m * m_inv);

        // Projection: cov2d = (J W Sigma3 W^T J^T)[..2,..2] + dilation.
        let mu_cam = w_rot * mu_w + camera.translation();
        let sigma3 = world_covariance(&realized.rot[i], &realized.scales[i]);
        let sigma_cam = w_rot * sigma3 * w_rot.transpose();
        let j = projection_jacobian(camera, &mu_cam);
        let mut g_full3 = Matrix3::zeros();
        g_full3[(0, 0)] = g_cov2d[(0, 0)];
        g_full3[(0, 1)] = g_cov2d[(0, 1)];
        g_full3[(1, 0)] = g_cov2d[(1, 0)];
        g_full3[(1, 1)] = g_cov2d[(1, 1)];
        let g_sigma_cam = j.transpose() * g_full3 * j;
        let g_j = 2.0 * g_full3 * j * sigma_cam;

        // Jacobian entries and the pixel mean back to the camera-space mean.
        let (px, py, pz) = (mu_cam.x, mu_cam.y, mu_cam.z);
        let iz = 1.0 / pz;
        let iz2 = iz * iz;
        let g_mu_cam = Vector3::new(
            acc.d_mean.x * camera.fx * iz + g_j[(0, 2)] * (-camera.fx * iz2),
            acc.d_mean.y * camera.fy * iz + g_j[(1, 2)] * (-camera.fy * iz2),
            -acc.d_mean.x * camera.fx * px * iz2 - acc.d_mean.y * camera.fy * py * iz2
                + g_j[(0, 0)] * (-camera.fx * iz2)
                + g_j[(1, 1)] * (-camera.fy * iz2)
                + g_j[(0, 2)] * (2.0 * camera.fx * px * iz2 * iz)
                + g_j[(1, 2)] * (2.0 * camera.fy * py * iz2 * iz),
        );
        g_mu_w += w_rot.transpose() * g_mu_cam;

        // World covariance to rotation columns and scales.
        let g_sigma3 = w_rot.transpose() * g_sigma_cam * w_rot;
        let mut d_s = Vector3::zeros();
        let mut d_r = [Vector3::zeros(); 3];
        for k in 0..3 {
            let r_k: Vector3<f64> = realized.rot[i].column(k).into();
            let s_k = realized.scales[i][k];
            let g_r = g_sigma3 * r_k;
            d_s[k] = 2.0 * s_k * r_k.dot(&g_r);
            d_r[k] = g_r * (2.0 * s_k * s_k);
        }

        // Multiplier chain: realized in-plane scales are raw * mult.
        let face = cloth.anchors[i].face as usize;
        if frames[face].is_none() {
            frames[face] = Some(mesh.face_frame(face, cloth.epsilon)?);
        }
        let raw = frames[face].as_ref().unwrap().scales;
        let mult = cloth.scale_mult[i];
        bundle.d_scale_mult[i] += raw.y * d_s[1] + raw.z * d_s[2];
        let d_s2_raw = mult * d_s[1];
        let d_s3_raw = mult * d_s[2];

        // Face frame back to the three vertices, barycentric mean on top.
        let f = mesh.faces[face];
        let (v1, v2, v3) = (
            mesh.world_pos[f[0] as usize],
            mesh.world_pos[f[1] as usize],
            mesh.world_pos[f[2] as usize],
        );
        let (gv1, gv2, gv3) = face_frame_backward(&v1, &v2, &v3, &d_r, d_s2_raw, d_s3_raw);
        let beta = cloth.anchors[i].beta;
        bundle.d_node_pos[f[0] as usize] += gv1 + g_mu_w * beta.x;
        bundle.d_node_pos[f[1] as usize] += gv2 + g_mu_w * beta.y;
        bundle.d_node_pos[f[2] as usize] += gv3 + g_mu_w * beta.z;
    }
    Ok(bundle)
}

/// Adjoint of the face-frame construction: gradients on the frame's three
/// rotation columns and the two raw in-plane extents, back to the vertices.
///
/// Follows the forward steps in reverse: height extent, first-edge extent,
/// third column (Gram-Schmidt), second column (edge normalize), first column
/// (cross product normalize).
fn face_frame_backward(
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
    v3: &Vector3<f64>,
    d_r: &[Vector3<f64>; 3],
    d_s2_raw: f64,
    d_s3_raw: f64,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let e1 = v2 - v1;
    let e2 = v3 - v1;
    let n = e1.cross(&e2);
    let nlen = n.norm();
    let r1 = n / nlen;
    let len1 = e1.norm();
    let r2 = e1 / len1;
    let a1 = e2.dot(&r1);
    let a2 = e2.dot(&r2);
    let u = e2 - r1 * a1 - r2 * a2;
    let lu = u.norm();
    let r3 = u / lu;

    // s2 = |e1|, s3 = e2 . r3.
    let mut ge1 = r2 * d_s2_raw;
    let mut ge2 = r3 * d_s3_raw;
    let gr3 = d_r[2] + e2 * d_s3_raw;

    // r3 = u / |u|.
    let gu = (gr3 - r3 * r3.dot(&gr3)) / lu;

    // u = e2 - (e2.r1) r1 - (e2.r2) r2.
    ge2 += gu - r1 * r1.dot(&gu) - r2 * r2.dot(&gu);
    let gr1 = d_r[0] - e2 * gu.dot(&r1) - gu * a1;
    let gr2 = d_r[1] - e2 * gu.dot(&r2) - gu * a2;

    // r2 = e1 / |e1|.
    ge1 += (gr2 - r2 * r2.dot(&gr2)) / len1;

    // r1 = (e1 x e2) / |e1 x e2|.
    let gn = (gr1 - r1 * r1.dot(&gr1)) / nlen;
    ge1 += e2.cross(&gn);
    ge2 += gn.cross(&e1);

    (-(ge1 + ge2), ge1, ge2)
}
