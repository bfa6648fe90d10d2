//! Image and mesh losses, their gradients, and evaluation metrics.
//!
//! Everything here is a pure function. Gradient variants return the loss
//! together with the gradient w.r.t. the first argument, laid out exactly
//! like the input buffer, so callers can chain them into the renderer's
//! backward pass without reshuffling.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::ClothMesh;
use crate::splat::{FrameSet, Image};

/// Weight of the structural term in the photometric loss.
pub const RENDER_LOSS_LAMBDA: f64 = 0.2;

/// Weight of the edge-preservation term in the mesh-extraction loss.
pub const EDGE_LOSS_GAMMA: f64 = 0.5;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Loss weights and rollout horizon shared across the pipeline.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    /// Photometric mix: `(1-lambda) L1 + lambda (1-SSIM)/2`.
    pub lambda: f64,
    /// Edge-preservation weight in the mesh-extraction loss.
    pub gamma: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    /// Training rollout length for the dynamics model.
    pub rollout_t: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: RENDER_LOSS_LAMBDA,
            gamma: EDGE_LOSS_GAMMA,
            ssim_window: SSIM_WINDOW,
            ssim_sigma: SSIM_SIGMA,
            rollout_t: 8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParams(format!("lambda {} outside [0,1]", self.lambda)));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParams(format!("gamma {} negative", self.gamma)));
        }
        if self.rollout_t < 1 {
            return Err(Error::InvalidParams("rollout_t must be >= 1".into()));
        }
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(Error::InvalidParams(format!(
                "ssim window {} must be odd and >= 3",
                self.ssim_window
            )));
        }
        if !(self.ssim_sigma > 0.0) {
            return Err(Error::InvalidParams("ssim sigma must be positive".into()));
        }
        Ok(())
    }
}

fn check_same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height || a.data.len() != b.data.len() {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Mean absolute difference over all pixels and channels.
pub fn l1(img: &Image, reference: &Image) -> Result<f64> {
    check_same_shape(img, reference)?;
    let n = img.data.len() as f64;
    let sum: f64 = img.data.iter().zip(&reference.data).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / n)
}

/// L1 and its gradient w.r.t. `img` (same layout as `img.data`).
pub fn l1_grad(img: &Image, reference: &Image) -> Result<(f64, Vec<f64>)> {
    check_same_shape(img, reference)?;
    let n = img.data.len() as f64;
    let mut sum = 0.0;
    let mut grad = vec![0.0; img.data.len()];
    for (i, (a, b)) in img.data.iter().zip(&reference.data).enumerate() {
        let d = a - b;
        sum += d.abs();
        // Subgradient 0 at the kink.
        grad[i] = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((sum / n, grad))
}

/// Normalized 1D Gaussian taps for the SSIM window.
fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let c = (window - 1) as f64 / 2.0;
    let mut k: Vec<f64> = (0..window)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Valid-mode separable correlation: `(w, h)` plane to `(w-win+1, h-win+1)`.
fn corr_valid(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let win = kernel.len();
    let ow = w - win + 1;
    let oh = h - win + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += plane[y * w + x + k] * kv;
            }
            tmp[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += tmp[(y + k) * ow + x] * kv;
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Adjoint of `corr_valid`: scatters per-window values back onto pixels,
/// i.e. a full-mode correlation with the (symmetric) kernel.
fn corr_full(map: &[f64], ow: usize, oh: usize, kernel: &[f64]) -> Vec<f64> {
    let win = kernel.len();
    let w = ow + win - 1;
    let h = oh + win - 1;
    let mut tmp = vec![0.0; w * oh];
    for y in 0..oh {
        for wx in 0..ow {
            let v = map[y * ow + wx];
            if v == 0.0 {
                continue;
            }
            for (k, &kv) in kernel.iter().enumerate() {
                tmp[y * w + wx + k] += v * kv;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for wy in 0..oh {
        for x in 0..w {
            let v = tmp[wy * w + x];
            if v == 0.0 {
                continue;
            }
            for (k, &kv) in kernel.iter().enumerate() {
                out[(wy + k) * w + x] += v * kv;
            }
        }
    }
    out
}

fn channel_plane(img: &Image, ch: usize) -> Vec<f64> {
    img.data.iter().skip(ch).step_by(3).copied().collect()
}

struct SsimStats {
    ux: Vec<f64>,
    uy: Vec<f64>,
    uxx: Vec<f64>,
    uyy: Vec<f64>,
    uxy: Vec<f64>,
    ow: usize,
    oh: usize,
}

fn ssim_stats(x: &[f64], y: &[f64], w: usize, h: usize, kernel: &[f64]) -> SsimStats {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let win = kernel.len();
    SsimStats {
        ux: corr_valid(x, w, h, kernel),
        uy: corr_valid(y, w, h, kernel),
        uxx: corr_valid(&xx, w, h, kernel),
        uyy: corr_valid(&yy, w, h, kernel),
        uxy: corr_valid(&xy, w, h, kernel),
        ow: w - win + 1,
        oh: h - win + 1,
    }
}

#[inline]
fn ssim_window_value(ux: f64, uy: f64, uxx: f64, uyy: f64, uxy: f64) -> (f64, f64, f64, f64, f64) {
    let vx = uxx - ux * ux;
    let vy = uyy - uy * uy;
    let cxy = uxy - ux * uy;
    let a1 = 2.0 * ux * uy + SSIM_C1;
    let a2 = 2.0 * cxy + SSIM_C2;
    let b1 = ux * ux + uy * uy + SSIM_C1;
    let b2 = vx + vy + SSIM_C2;
    (a1 * a2 / (b1 * b2), a1, a2, b1, b2)
}

fn ssim_with(img: &Image, reference: &Image, window: usize, sigma: f64) -> Result<f64> {
    check_same_shape(img, reference)?;
    if img.width < window || img.height < window {
        return Err(Error::InvalidInput(format!(
            "image {}x{} smaller than the {}x{} ssim window",
            img.width, img.height, window, window
        )));
    }
    let kernel = gaussian_kernel(window, sigma);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let x = channel_plane(img, ch);
        let y = channel_plane(reference, ch);
        let s = ssim_stats(&x, &y, img.width, img.height, &kernel);
        for i in 0..s.ow * s.oh {
            let (v, ..) = ssim_window_value(s.ux[i], s.uy[i], s.uxx[i], s.uyy[i], s.uxy[i]);
            total += v;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean SSIM over valid window positions and channels. 11x11 Gaussian
/// window, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2.
pub fn ssim(img: &Image, reference: &Image) -> Result<f64> {
    ssim_with(img, reference, SSIM_WINDOW, SSIM_SIGMA)
}

/// Structural dissimilarity `(1 - ssim) / 2`.
pub fn d_ssim(img: &Image, reference: &Image) -> Result<f64> {
    Ok((1.0 - ssim(img, reference)?) / 2.0)
}

/// SSIM and its gradient w.r.t. `img`.
///
/// Each window's SSIM depends on `img` through the Gaussian-weighted moments
/// `E[x]`, `E[x^2]`, `E[xy]`; the gradient is the adjoint correlation of the
/// per-window partials, plus pointwise terms for the quadratic moments.
pub fn ssim_grad(img: &Image, reference: &Image) -> Result<(f64, Vec<f64>)> {
    check_same_shape(img, reference)?;
    let window = SSIM_WINDOW;
    if img.width < window || img.height < window {
        return Err(Error::InvalidInput(format!(
            "image {}x{} smaller than the {}x{} ssim window",
            img.width, img.height, window, window
        )));
    }
    let kernel = gaussian_kernel(window, SSIM_SIGMA);
    let mut grad = vec![0.0; img.data.len()];
    let mut total = 0.0;
    let n_windows = (img.width - window + 1) * (img.height - window + 1);
    let scale = 1.0 / (3 * n_windows) as f64;
    for ch in 0..3 {
        let x = channel_plane(img, ch);
        let y = channel_plane(reference, ch);
        let s = ssim_stats(&x, &y, img.width, img.height, &kernel);
        let mut g_ux = vec![0.0; n_windows];
        let mut g_uxx = vec![0.0; n_windows];
        let mut g_uxy = vec![0.0; n_windows];
        for i in 0..n_windows {
            let (ux, uy) = (s.ux[i], s.uy[i]);
            let (v, a1, a2, b1, b2) = ssim_window_value(ux, uy, s.uxx[i], s.uyy[i], s.uxy[i]);
            total += v;
            let d = b1 * b2;
            // d(a1 a2)/d ux and d(b1 b2)/d ux, with the covariance and
            // variance both carrying -ux terms.
            let dn_dux = 2.0 * uy * a2 - 2.0 * uy * a1;
            let dd_dux = 2.0 * ux * b2 - 2.0 * ux * b1;
            g_ux[i] = dn_dux / d - v * dd_dux / d;
            g_uxx[i] = -v * b1 / d;
            g_uxy[i] = 2.0 * a1 / d;
        }
        let ow = s.ow;
        let oh = s.oh;
        let f_ux = corr_full(&g_ux, ow, oh, &kernel);
        let f_uxx = corr_full(&g_uxx, ow, oh, &kernel);
        let f_uxy = corr_full(&g_uxy, ow, oh, &kernel);
        for p in 0..img.width * img.height {
            let g = f_ux[p] + 2.0 * x[p] * f_uxx[p] + y[p] * f_uxy[p];
            grad[p * 3 + ch] = g * scale;
        }
    }
    Ok((total * scale, grad))
}

/// Photometric loss `(1-lambda) L1 + lambda (1-SSIM)/2`.
pub fn render_loss(img: &Image, reference: &Image, cfg: &LossConfig) -> Result<f64> {
    let l = l1(img, reference)?;
    let s = ssim_with(img, reference, cfg.ssim_window, cfg.ssim_sigma)?;
    Ok((1.0 - cfg.lambda) * l + cfg.lambda * (1.0 - s) / 2.0)
}

/// Photometric loss and its gradient w.r.t. `img`.
pub fn render_loss_grad(img: &Image, reference: &Image, cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let (l, gl) = l1_grad(img, reference)?;
    let (s, gs) = ssim_grad(img, reference)?;
    let loss = (1.0 - cfg.lambda) * l + cfg.lambda * (1.0 - s) / 2.0;
    let grad = gl
        .iter()
        .zip(&gs)
        .map(|(a, b)| (1.0 - cfg.lambda) * a - cfg.lambda / 2.0 * b)
        .collect();
    Ok((loss, grad))
}

/// Sum over undirected edges of the absolute deviation from rest length.
pub fn edge_loss(mesh: &ClothMesh, rest_lengths: &[f64]) -> Result<f64> {
    edge_loss_positions(&mesh.world_pos, &mesh.edges, rest_lengths)
}

pub fn edge_loss_positions(
    positions: &[Vector3<f64>],
    edges: &[[u32; 2]],
    rest_lengths: &[f64],
) -> Result<f64> {
    if edges.len() != rest_lengths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} edges vs {} rest lengths",
            edges.len(),
            rest_lengths.len()
        )));
    }
    let mut total = 0.0;
    for (e, rest) in edges.iter().zip(rest_lengths) {
        let (i, j) = (e[0] as usize, e[1] as usize);
        if i >= positions.len() || j >= positions.len() {
            return Err(Error::ShapeMismatch("edge index out of range".into()));
        }
        total += ((positions[i] - positions[j]).norm() - rest).abs();
    }
    Ok(total)
}

/// Edge loss and its gradient w.r.t. node positions.
pub fn edge_loss_grad(
    positions: &[Vector3<f64>],
    edges: &[[u32; 2]],
    rest_lengths: &[f64],
) -> Result<(f64, Vec<Vector3<f64>>)> {
    if edges.len() != rest_lengths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} edges vs {} rest lengths",
            edges.len(),
            rest_lengths.len()
        )));
    }
    let mut total = 0.0;
    let mut grad = vec![Vector3::zeros(); positions.len()];
    for (e, rest) in edges.iter().zip(rest_lengths) {
        let (i, j) = (e[0] as usize, e[1] as usize);
        if i >= positions.len() || j >= positions.len() {
            return Err(Error::ShapeMismatch("edge index out of range".into()));
        }
        let d = positions[i] - positions[j];
        let len = d.norm();
        let dev = len - rest;
        total += dev.abs();
        if len > 0.0 && dev != 0.0 {
            let dir = d * (dev.signum() / len);
            grad[i] += dir;
            grad[j] -= dir;
        }
    }
    Ok((total, grad))
}

/// Mesh-extraction objective: photometric L1 averaged over views plus the
/// weighted edge-preservation term.
pub fn geometry_loss(
    rendered: &FrameSet,
    observed: &FrameSet,
    mesh: &ClothMesh,
    rest_lengths: &[f64],
    cfg: &LossConfig,
) -> Result<f64> {
    if rendered.images.len() != observed.images.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rendered views vs {} observed",
            rendered.images.len(),
            observed.images.len()
        )));
    }
    if rendered.images.is_empty() {
        return Err(Error::InvalidInput("no views".into()));
    }
    let mut photo = 0.0;
    for (r, o) in rendered.images.iter().zip(&observed.images) {
        photo += l1(r, o)?;
    }
    photo /= rendered.images.len() as f64;
    Ok(photo + cfg.gamma * edge_loss(mesh, rest_lengths)?)
}

fn check_traj_pair(pred: &[Vec<Vector3<f64>>], target: &[Vec<Vector3<f64>>]) -> Result<()> {
    for (t, (p, g)) in pred.iter().zip(target).enumerate() {
        if p.len() != g.len() || p.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "step {t}: {} predicted nodes vs {} target",
                p.len(),
                g.len()
            )));
        }
    }
    Ok(())
}

/// Rollout training objective: sum over the first `t_steps` steps of the
/// per-step mean squared node error.
pub fn node_loss(
    pred: &[Vec<Vector3<f64>>],
    target: &[Vec<Vector3<f64>>],
    t_steps: usize,
) -> Result<f64> {
    if pred.len() < t_steps || target.len() < t_steps {
        return Err(Error::ShapeMismatch(format!(
            "need {t_steps} steps, have {} predicted and {} target",
            pred.len(),
            target.len()
        )));
    }
    check_traj_pair(&pred[..t_steps], &target[..t_steps])?;
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(target).take(t_steps) {
        let k = p.len() as f64;
        let mse: f64 = p.iter().zip(g).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / k;
        total += mse;
    }
    Ok(total)
}

/// Per-timestep RMSE over nodes: `sqrt(mean_k ||pred - gt||^2)`.
pub fn rollout_rmse_per_step(
    pred: &[Vec<Vector3<f64>>],
    gt: &[Vec<Vector3<f64>>],
) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted steps vs {} ground truth",
            pred.len(),
            gt.len()
        )));
    }
    check_traj_pair(pred, gt)?;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let k = p.len() as f64;
            (p.iter().zip(g).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / k).sqrt()
        })
        .collect())
}

/// Mean of the per-timestep RMSE over a step range.
pub fn rollout_rmse(
    pred: &[Vec<Vector3<f64>>],
    gt: &[Vec<Vector3<f64>>],
    range: std::ops::Range<usize>,
) -> Result<f64> {
    let per_step = rollout_rmse_per_step(pred, gt)?;
    if range.start >= range.end || range.end > per_step.len() {
        return Err(Error::InvalidInput(format!(
            "range {}..{} invalid for {} steps",
            range.start,
            range.end,
            per_step.len()
        )));
    }
    let n = (range.end - range.start) as f64;
    Ok(per_step[range].iter().sum::<f64>() / n)
}

/// Peak signal-to-noise ratio in dB against a unit dynamic range. Identical
/// images return `f64::INFINITY`.
pub fn psnr(img: &Image, reference: &Image) -> Result<f64> {
    check_same_shape(img, reference)?;
    let n = img.data.len() as f64;
    let mse: f64 = img
        .data
        .iter()
        .zip(&reference.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Mean over frames and views of the per-image RMSE.
pub fn rmse_vp(pred_video: &[FrameSet], gt_video: &[FrameSet]) -> Result<f64> {
    if pred_video.len() != gt_video.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted frames vs {} ground truth",
            pred_video.len(),
            gt_video.len()
        )));
    }
    if pred_video.is_empty() {
        return Err(Error::InvalidInput("empty video".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, g) in pred_video.iter().zip(gt_video) {
        if p.images.len() != g.images.len() {
            return Err(Error::ShapeMismatch(format!(
                "timestep {}: {} views vs {}",
                p.timestep,
                p.images.len(),
                g.images.len()
            )));
        }
        for (a, b) in p.images.iter().zip(&g.images) {
            check_same_shape(a, b)?;
            let n = a.data.len() as f64;
            let mse: f64 =
                a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
            total += mse.sqrt();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image { width: w, height: h, data: (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect() }
    }

    /// Direct per-window SSIM, no separability tricks. The oracle the fast
    /// path is checked against.
    fn ssim_naive(img: &Image, reference: &Image) -> f64 {
        let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
        let (w, h) = (img.width, img.height);
        let mut total = 0.0;
        let mut count = 0;
        for ch in 0..3 {
            for wy in 0..=h - SSIM_WINDOW {
                for wx in 0..=w - SSIM_WINDOW {
                    let (mut ux, mut uy, mut uxx, mut uyy, mut uxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for ky in 0..SSIM_WINDOW {
                        for kx in 0..SSIM_WINDOW {
                            let g = kernel[kx] * kernel[ky];
                            let x = img.data[((wy + ky) * w + wx + kx) * 3 + ch];
                            let y = reference.data[((wy + ky) * w + wx + kx) * 3 + ch];
                            ux += g * x;
                            uy += g * y;
                            uxx += g * x * x;
                            uyy += g * y * y;
                            uxy += g * x * y;
                        }
                    }
                    let (v, ..) = ssim_window_value(ux, uy, uxx, uyy, uxy);
                    total += v;
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn l1_basics() {
        let a = random_image(8, 6, 1);
        assert_eq!(l1(&a, &a).unwrap(), 0.0);
        let b = Image::filled(8, 6, [0.0; 3]);
        let c = Image::filled(8, 6, [0.3, 0.3, 0.3]);
        assert_abs_diff_eq!(l1(&c, &b).unwrap(), 0.3, epsilon = 1e-15);
        let wrong = Image::new(7, 6);
        assert!(l1(&a, &wrong).is_err());
    }

    #[test]
    fn l1_gradient_matches_finite_differences() {
        let a = random_image(6, 5, 2);
        let b = random_image(6, 5, 3);
        let (_, grad) = l1_grad(&a, &b).unwrap();
        let h = 1e-7;
        for idx in (0..a.data.len()).step_by(13) {
            let mut up = a.clone();
            up.data[idx] += h;
            let mut dn = a.clone();
            dn.data[idx] -= h;
            let fd = (l1(&up, &b).unwrap() - l1(&dn, &b).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(grad[idx], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let a = random_image(16, 14, 4);
        assert_abs_diff_eq!(ssim(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d_ssim(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ssim_of_uniform_images_has_closed_form() {
        // Variances vanish, so SSIM reduces to (2ab+C1)/(a^2+b^2+C1).
        let a = Image::filled(12, 12, [0.3; 3]);
        let b = Image::filled(12, 12, [0.7; 3]);
        let expect = (2.0 * 0.3 * 0.7 + SSIM_C1) / (0.3 * 0.3 + 0.7 * 0.7 + SSIM_C1);
        assert_abs_diff_eq!(ssim(&a, &b).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn separable_ssim_matches_naive_oracle() {
        let a = random_image(17, 13, 5);
        let b = random_image(17, 13, 6);
        assert_abs_diff_eq!(ssim(&a, &b).unwrap(), ssim_naive(&a, &b), epsilon = 1e-12);
    }

    #[test]
    fn inverted_checkerboard_is_strongly_dissimilar() {
        let (w, h) = (12, 12);
        let mut a = Image::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let v = ((x + y) % 2) as f64;
                a.set(x, y, [v, v, v]);
            }
        }
        let b = Image { width: w, height: h, data: a.data.iter().map(|v| 1.0 - v).collect() };
        let s = ssim(&a, &b).unwrap();
        assert_abs_diff_eq!(s, ssim_naive(&a, &b), epsilon = 1e-12);
        assert!(s < -0.5, "anti-correlated structure should be strongly negative, got {s}");
    }

    #[test]
    fn ssim_is_symmetric_and_bounded() {
        for seed in 0..4 {
            let a = random_image(15, 12, 100 + seed);
            let b = random_image(15, 12, 200 + seed);
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            assert_abs_diff_eq!(ab, ba, epsilon = 1e-12);
            assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn ssim_rejects_images_smaller_than_the_window() {
        let a = random_image(10, 12, 7);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let a = random_image(13, 12, 8);
        let b = random_image(13, 12, 9);
        let (s, grad) = ssim_grad(&a, &b).unwrap();
        assert_abs_diff_eq!(s, ssim(&a, &b).unwrap(), epsilon = 1e-13);
        let h = 1e-6;
        for idx in (0..a.data.len()).step_by(41) {
            let mut up = a.clone();
            up.data[idx] += h;
            let mut dn = a.clone();
            dn.data[idx] -= h;
            let fd = (ssim(&up, &b).unwrap() - ssim(&dn, &b).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(grad[idx], fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn render_loss_interpolates_between_l1_and_dssim() {
        let a = random_image(14, 12, 10);
        let b = random_image(14, 12, 11);
        let mut cfg = LossConfig { lambda: 0.0, ..LossConfig::default() };
        assert_abs_diff_eq!(render_loss(&a, &b, &cfg).unwrap(), l1(&a, &b).unwrap(), epsilon = 1e-14);
        cfg.lambda = 1.0;
        assert_abs_diff_eq!(render_loss(&a, &b, &cfg).unwrap(), d_ssim(&a, &b).unwrap(), epsilon = 1e-14);
        cfg.lambda = 0.2;
        assert_abs_diff_eq!(render_loss(&a, &a, &cfg).unwrap(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn render_loss_gradient_matches_finite_differences() {
        let a = random_image(13, 12, 12);
        let b = random_image(13, 12, 13);
        let cfg = LossConfig::default();
        let (_, grad) = render_loss_grad(&a, &b, &cfg).unwrap();
        let h = 1e-6;
        for idx in (0..a.data.len()).step_by(47) {
            let mut up = a.clone();
            up.data[idx] += h;
            let mut dn = a.clone();
            dn.data[idx] -= h;
            let fd =
                (render_loss(&up, &b, &cfg).unwrap() - render_loss(&dn, &b, &cfg).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(grad[idx], fd, epsilon = 1e-7);
        }
    }

    fn quad_mesh() -> ClothMesh {
        ClothMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(1.0, 1.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![
                Vector2::new(0.0, 0.0),
                Vector2::new(1.0, 0.0),
                Vector2::new(1.0, 1.0),
                Vector2::new(0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn edge_loss_zero_when_undeformed_and_under_rigid_motion() {
        let mesh = quad_mesh();
        let rest = crate::geometry::edge_lengths(&mesh.world_pos, &mesh.edges);
        assert_eq!(edge_loss(&mesh, &rest).unwrap(), 0.0);

        let rot = nalgebra::Rotation3::from_euler_angles(0.9, -0.4, 1.7);
        let shift = Vector3::new(5.0, -2.0, 3.0);
        let moved: Vec<Vector3<f64>> = mesh.world_pos.iter().map(|p| rot * p + shift).collect();
        let loss = edge_loss_positions(&moved, &mesh.edges, &rest).unwrap();
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn edge_loss_scales_linearly_with_uniform_stretch() {
        let mesh = quad_mesh();
        let rest = crate::geometry::edge_lengths(&mesh.world_pos, &mesh.edges);
        let scaled: Vec<Vector3<f64>> = mesh.world_pos.iter().map(|p| p * 1.1).collect();
        let expect = 0.1 * rest.iter().sum::<f64>();
        let loss = edge_loss_positions(&scaled, &mesh.edges, &rest).unwrap();
        assert_abs_diff_eq!(loss, expect, epsilon = 1e-12);
    }

    #[test]
    fn edge_loss_gradient_matches_finite_differences() {
        let mesh = quad_mesh();
        let rest = crate::geometry::edge_lengths(&mesh.world_pos, &mesh.edges);
        // Deform away from both the rest state and the |.| kink.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pos: Vec<Vector3<f64>> = mesh
            .world_pos
            .iter()
            .map(|p| p + Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)))
            .collect();
        let (_, grad) = edge_loss_grad(&pos, &mesh.edges, &rest).unwrap();
        let h = 1e-7;
        for node in 0..pos.len() {
            for axis in 0..3 {
                let mut up = pos.clone();
                up[node][axis] += h;
                let mut dn = pos.clone();
                dn[node][axis] -= h;
                let fd = (edge_loss_positions(&up, &mesh.edges, &rest).unwrap()
                    - edge_loss_positions(&dn, &mesh.edges, &rest).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(grad[node][axis], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn geometry_loss_combines_photometric_views_and_edges() {
        let mesh = quad_mesh();
        let rest = crate::geometry::edge_lengths(&mesh.world_pos, &mesh.edges);
        let cfg = LossConfig::default();
        let obs = FrameSet {
            timestep: 0,
            camera_ids: vec![0, 1],
            images: vec![Image::filled(8, 8, [0.0; 3]), Image::filled(8, 8, [0.0; 3])],
        };
        // Perfect render, undeformed mesh.
        assert_eq!(geometry_loss(&obs, &obs, &mesh, &rest, &cfg).unwrap(), 0.0);

        // Two views with constant offsets 0.2 and 0.4, mesh scaled by 1.1:
        // hand sum is (0.2 + 0.4)/2 + gamma * 0.1 * sum(rest).
        let rendered = FrameSet {
            timestep: 0,
            camera_ids: vec![0, 1],
            images: vec![Image::filled(8, 8, [0.2; 3]), Image::filled(8, 8, [0.4; 3])],
        };
        let mut scaled = mesh.clone();
        scaled.world_pos.iter_mut().for_each(|p| *p *= 1.1);
        let expect = 0.3 + cfg.gamma * 0.1 * rest.iter().sum::<f64>();
        let got = geometry_loss(&rendered, &obs, &scaled, &rest, &cfg).unwrap();
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);

        // gamma = 0 keeps only the photometric part.
        let photo_only = LossConfig { gamma: 0.0, ..cfg };
        let got = geometry_loss(&rendered, &obs, &scaled, &rest, &photo_only).unwrap();
        assert_abs_diff_eq!(got, 0.3, epsilon = 1e-12);
    }

    fn random_traj(t: usize, k: usize, seed: u64) -> Vec<Vec<Vector3<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn node_loss_identities() {
        let a = random_traj(5, 7, 21);
        assert_eq!(node_loss(&a, &a, 5).unwrap(), 0.0);

        // Constant offset o on every node and step: loss T * |o|^2.
        let o = Vector3::new(0.1, -0.2, 0.05);
        let b: Vec<Vec<Vector3<f64>>> =
            a.iter().map(|step| step.iter().map(|p| p + o).collect()).collect();
        assert_abs_diff_eq!(node_loss(&b, &a, 5).unwrap(), 5.0 * o.norm_squared(), epsilon = 1e-12);

        // T = 1 is the single-step MSE.
        let k = a[0].len() as f64;
        let mse: f64 =
            a[0].iter().zip(&b[0]).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / k;
        assert_abs_diff_eq!(node_loss(&b, &a, 1).unwrap(), mse, epsilon = 1e-12);
    }

    #[test]
    fn node_loss_matches_loop_oracle() {
        let a = random_traj(4, 6, 22);
        let b = random_traj(4, 6, 23);
        let mut expect = 0.0;
        for t in 0..4 {
            let mut step = 0.0;
            for k in 0..6 {
                step += (a[t][k] - b[t][k]).norm_squared();
            }
            expect += step / 6.0;
        }
        assert_abs_diff_eq!(node_loss(&a, &b, 4).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn rollout_rmse_of_constant_offset_is_the_offset_norm() {
        let a = random_traj(6, 9, 24);
        let o = Vector3::new(0.3, 0.4, 0.0); // norm 0.5
        let b: Vec<Vec<Vector3<f64>>> =
            a.iter().map(|step| step.iter().map(|p| p + o).collect()).collect();
        let per_step = rollout_rmse_per_step(&b, &a).unwrap();
        for v in &per_step {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(rollout_rmse(&b, &a, 0..6).unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(rollout_rmse(&a, &a, 2..5).unwrap(), 0.0);
        assert!(rollout_rmse(&a, &a, 4..4).is_err());
    }

    #[test]
    fn psnr_identities() {
        let a = random_image(9, 9, 25);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let gray = Image::filled(9, 9, [0.5; 3]);
        let black = Image::filled(9, 9, [0.0; 3]);
        // -10 log10(0.25), the classic mid-gray figure.
        assert_abs_diff_eq!(psnr(&gray, &black).unwrap(), 6.020599913279624, epsilon = 1e-12);
    }

    #[test]
    fn rmse_vp_averages_per_image_rmse() {
        let mk = |v: f64| FrameSet {
            timestep: 0,
            camera_ids: vec![0, 1],
            images: vec![Image::filled(6, 6, [v; 3]), Image::filled(6, 6, [0.0; 3])],
        };
        let pred = vec![mk(0.2), mk(0.4)];
        let gt = vec![mk(0.0), mk(0.0)];
        // Per-image RMSE of a constant offset c is c; half the images differ.
        let expect = (0.2 + 0.0 + 0.4 + 0.0) / 4.0;
        assert_abs_diff_eq!(rmse_vp(&pred, &gt).unwrap(), expect, epsilon = 1e-12);
        assert_eq!(rmse_vp(&gt, &gt).unwrap(), 0.0);
    }
}
