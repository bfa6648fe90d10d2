//! Textured triangle rasterizer for ground-truth frames.
//!
//! This is a plain z-buffered perspective rasterizer: half-plane inclusion
//! tests against pixel centers, perspective-correct UV interpolation,
//! two-sided faces, bilinear texture lookup, optional single directional
//! light. It deliberately shares no image-formation code with the splat
//! renderer (only the `Camera` and `Image` data types), so the two act as
//! independent witnesses of each other's output.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::ClothMesh;
use crate::splat::{Camera, FrameSet, Image};
use crate::synth::Trajectory;

/// Faces closer than this (camera z) are dropped entirely. No polygon
/// clipping: synthetic scenes keep the subject well inside the frustum.
const RASTER_NEAR: f64 = 1e-3;

/// Rasterizes one view of one frame, shading each covered pixel with
/// `shade(uv, world_normal)`. Returns the image and the depth buffer
/// (infinity where nothing landed).
pub(crate) fn rasterize_scene(
    world: &[Vector3<f64>],
    mesh: &ClothMesh,
    cam: &Camera,
    shade: &(dyn Fn(Vector2<f64>, Vector3<f64>) -> [f64; 3] + Sync),
) -> (Image, Vec<f64>) {
    let w = cam.width;
    let h = cam.height;
    let mut img = Image::new(w, h);
    let mut zbuf = vec![f64::INFINITY; w * h];
    for f in &mesh.faces {
        let wp = [
            world[f[0] as usize],
            world[f[1] as usize],
            world[f[2] as usize],
        ];
        let uv = [
            mesh.mesh_pos[f[0] as usize],
            mesh.mesh_pos[f[1] as usize],
            mesh.mesh_pos[f[2] as usize],
        ];
        let c = [cam.to_cam(&wp[0]), cam.to_cam(&wp[1]), cam.to_cam(&wp[2])];
        if c.iter().any(|p| p.z < RASTER_NEAR) {
            continue;
        }
        let p: Vec<Vector2<f64>> = c.iter().map(|v| cam.cam_to_pixel(v)).collect();
        let area2 = (p[1] - p[0]).perp(&(p[2] - p[0]));
        if area2.abs() < 1e-12 {
            continue;
        }
        let normal = (wp[1] - wp[0]).cross(&(wp[2] - wp[0])).normalize();

        let min_x = p.iter().map(|q| q.x).fold(f64::MAX, f64::min);
        let max_x = p.iter().map(|q| q.x).fold(f64::MIN, f64::max);
        let min_y = p.iter().map(|q| q.y).fold(f64::MAX, f64::min);
        let max_y = p.iter().map(|q| q.y).fold(f64::MIN, f64::max);
        // Pixel centers sit at integer + 0.5.
        let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
        let x1 = ((max_x - 0.5).floor() as i64).min(w as i64 - 1);
        let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
        let y1 = ((max_y - 0.5).floor() as i64).min(h as i64 - 1);
        if x1 < x0 as i64 || y1 < y0 as i64 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);

        let flip = if area2 > 0.0 { 1.0 } else { -1.0 };
        for py in y0..=y1 {
            for px in x0..=x1 {
                let q = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
                // Half-plane edge functions, inclusive so shared edges have
                // no seams; two-sided via the orientation flip.
                let w0 = flip * (p[2] - p[1]).perp(&(q - p[1]));
                let w1 = flip * (p[0] - p[2]).perp(&(q - p[2]));
                let w2 = flip * (p[1] - p[0]).perp(&(q - p[0]));
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let l = Vector3::new(w0, w1, w2) / (flip * area2);
                // Perspective correction: screen-space barycentric weights
                // interpolate attribute/z linearly.
                let inv_z = l.x / c[0].z + l.y / c[1].z + l.z / c[2].z;
                let z = 1.0 / inv_z;
                let idx = py * w + px;
                if z >= zbuf[idx] {
                    continue;
                }
                zbuf[idx] = z;
                let uv_over_z = uv[0] * (l.x / c[0].z) + uv[1] * (l.y / c[1].z) + uv[2] * (l.z / c[2].z);
                img.set(px, py, shade(uv_over_z * z, normal));
            }
        }
    }
    (img, zbuf)
}

/// Bilinear lookup in a linear-RGB texture with clamped addressing. UV is
/// mapped so that (0,0) hits the center of the first texel and (1,1) the
/// center of the last one.
pub(crate) fn sample_bilinear(tex: &Image, u: f64, v: f64) -> [f64; 3] {
    let tx = u.clamp(0.0, 1.0) * (tex.width - 1) as f64;
    let ty = v.clamp(0.0, 1.0) * (tex.height - 1) as f64;
    let x0 = tx.floor() as usize;
    let y0 = ty.floor() as usize;
    let x1 = (x0 + 1).min(tex.width - 1);
    let y1 = (y0 + 1).min(tex.height - 1);
    let fx = tx - x0 as f64;
    let fy = ty - y0 as f64;
    let mut out = [0.0; 3];
    let (c00, c10) = (tex.get(x0, y0), tex.get(x1, y0));
    let (c01, c11) = (tex.get(x0, y1), tex.get(x1, y1));
    for ch in 0..3 {
        let top = c00[ch] * (1.0 - fx) + c10[ch] * fx;
        let bot = c01[ch] * (1.0 - fx) + c11[ch] * fx;
        out[ch] = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// Renders every step of a trajectory from every camera. Views within a
/// step render in parallel; results keep camera order. `light` is a world
/// direction for two-sided N.L shading with a 0.1 ambient floor; `None`
/// means flat texture color.
pub fn render_ground_truth(
    traj: &Trajectory,
    mesh: &ClothMesh,
    cams: &[Camera],
    texture: &Image,
    light: Option<Vector3<f64>>,
) -> Result<Vec<FrameSet>> {
    use crate::error::Error;
    if texture.width == 0 || texture.height == 0 {
        return Err(Error::InvalidInput("empty texture".into()));
    }
    traj.validate()?;
    if traj.num_nodes() != mesh.num_nodes() && !traj.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "trajectory has {} nodes, mesh has {}",
            traj.num_nodes(),
            mesh.num_nodes()
        )));
    }
    let light_dir = light.map(|l| l.normalize());
    let shade = move |uv: Vector2<f64>, n: Vector3<f64>| -> [f64; 3] {
        let base = sample_bilinear(texture, uv.x, uv.y);
        match light_dir {
            None => base,
            Some(l) => {
                let lum = 0.1 + 0.9 * n.dot(&l).abs();
                [base[0] * lum, base[1] * lum, base[2] * lum]
            }
        }
    };
    let camera_ids: Vec<u32> = cams.iter().map(|c| c.id).collect();
    traj.positions
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            let images: Vec<Image> = cams
                .par_iter()
                .map(|cam| rasterize_scene(frame, mesh, cam, &shade).0)
                .collect();
            let fs = FrameSet { timestep: t, camera_ids: camera_ids.clone(), images };
            fs.validate()?;
            Ok(fs)
        })
        .collect()
}

/// A `px` x `px` checkerboard with `cells` squares per side, alternating
/// between two linear-RGB colors.
pub fn checkerboard(px: usize, cells: usize, a: [f64; 3], b: [f64; 3]) -> Image {
    let mut img = Image::new(px, px);
    let cell = (px / cells).max(1);
    for y in 0..px {
        for x in 0..px {
            let parity = (x / cell + y / cell) % 2;
            img.set(x, y, if parity == 0 { a } else { b });
        }
    }
    img
}
