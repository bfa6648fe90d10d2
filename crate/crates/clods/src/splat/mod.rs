//! Surface-bound Gaussian splats and the differentiable software renderer.
//!
//! Components live on mesh faces through fixed barycentric anchors, so the
//! splat cloud deforms with the mesh instead of owning free positions. Each
//! frame, anchors are "realized" into world means, orientations from the
//! face frame, and anisotropic scales tied to the face extents. Opacity is
//! not a stored parameter: a small MLP maps the realized world position and
//! the fixed material position of every component to its opacity, which is
//! what lets occluded regions stay opaque as the cloth folds.

mod camera;
mod opacity;
mod project;
mod render;
mod sh;

pub use camera::Camera;
pub use opacity::OpacityNet;
pub use project::{
    project_gaussian, projection_jacobian, world_covariance, Projected, COV2D_DILATION, NEAR_PLANE,
};
pub use render::{
    render, render_batch, render_naive, render_signature, replay, RenderOptions, RenderTape,
    TapeComp, T_MIN_DEFAULT,
};
pub use sh::{eval_sh, eval_sh_jacobian, num_sh_coeffs, SH_C0};

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::ClothMesh;

/// Ratio of the thickness scale to the mean initial edge length.
pub const EPSILON_EDGE_RATIO: f64 = 1e-4;

/// Linear RGB image, `[0,1]` nominal range, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * 3
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = self.idx(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = self.idx(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Images of one time step across cameras. All images share one resolution.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub timestep: usize,
    pub camera_ids: Vec<u32>,
    pub images: Vec<Image>,
}

impl FrameSet {
    pub fn validate(&self) -> Result<()> {
        if self.camera_ids.len() != self.images.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} camera ids vs {} images",
                self.camera_ids.len(),
                self.images.len()
            )));
        }
        if self.images.is_empty() {
            return Err(Error::InvalidInput("empty frame set".into()));
        }
        let (w, h) = (self.images[0].width, self.images[0].height);
        for (i, img) in self.images.iter().enumerate() {
            if img.width != w || img.height != h {
                return Err(Error::ShapeMismatch(format!(
                    "image {i} is {}x{}, expected {}x{}",
                    img.width, img.height, w, h
                )));
            }
            if img.data.len() != w * h * 3 {
                return Err(Error::ShapeMismatch(format!("image {i} buffer length")));
            }
            if !img.is_finite() {
                return Err(Error::InvalidInput(format!("image {i} has non-finite pixels")));
            }
        }
        Ok(())
    }
}

/// Barycentric binding of one component to one face.
#[derive(Debug, Clone, Copy)]
pub struct Anchor {
    pub face: u32,
    pub beta: Vector3<f64>,
}

/// The learnable appearance of a cloth: anchored Gaussian components with
/// spherical-harmonic colors and per-component in-plane scale multipliers.
/// Anchors are sampled once and never move; opacity lives in [`OpacityNet`].
#[derive(Debug, Clone)]
pub struct GaussianCloth {
    pub anchors: Vec<Anchor>,
    pub sh_degree: u8,
    /// SH coefficients, layout `[component][channel][coeff]`, flattened.
    pub colors: Vec<f64>,
    /// Per-component multiplier on the in-plane scales, kept in `(0, 1]`.
    pub scale_mult: Vec<f64>,
    /// Thickness scale `s1`, fixed from the initial mesh.
    pub epsilon: f64,
}

impl GaussianCloth {
    pub fn num_components(&self) -> usize {
        self.anchors.len()
    }

    pub fn num_coeffs(&self) -> usize {
        num_sh_coeffs(self.sh_degree)
    }

    #[inline]
    pub fn color_index(&self, comp: usize, channel: usize, coeff: usize) -> usize {
        (comp * 3 + channel) * self.num_coeffs() + coeff
    }

    pub fn validate(&self, mesh: &ClothMesh) -> Result<()> {
        let n = self.anchors.len();
        if self.colors.len() != n * 3 * self.num_coeffs() || self.scale_mult.len() != n {
            return Err(Error::ShapeMismatch("gaussian cloth buffers".into()));
        }
        if self.sh_degree > 3 {
            return Err(Error::InvalidInput(format!("sh degree {} > 3", self.sh_degree)));
        }
        for (i, a) in self.anchors.iter().enumerate() {
            if a.face as usize >= mesh.num_faces() {
                return Err(Error::ShapeMismatch(format!("anchor {i} face out of range")));
            }
            let b = a.beta;
            if b.x < -1e-12 || b.y < -1e-12 || b.z < -1e-12 || (b.x + b.y + b.z - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("anchor {i} outside simplex")));
            }
        }
        for (i, m) in self.scale_mult.iter().enumerate() {
            if !(*m > 0.0 && *m <= 1.0) {
                return Err(Error::InvalidInput(format!("scale_mult[{i}] = {m} outside (0,1]")));
            }
        }
        Ok(())
    }
}

/// Samples `per_face` anchors per face, uniform over each triangle, and
/// initializes the appearance: mid-gray degree-0 color, zero higher bands,
/// scale multipliers `1/sqrt(per_face)` so stacked components roughly
/// preserve footprint coverage.
pub fn anchor_gaussians(
    mesh: &ClothMesh,
    per_face: usize,
    sh_degree: u8,
    seed: u64,
) -> Result<GaussianCloth> {
    if per_face == 0 {
        return Err(Error::InvalidInput("per_face must be >= 1".into()));
    }
    if sh_degree > 3 {
        return Err(Error::InvalidInput(format!("sh degree {sh_degree} > 3")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.num_faces() * per_face;
    let mut anchors = Vec::with_capacity(n);
    for face in 0..mesh.num_faces() {
        for _ in 0..per_face {
            // Reflection trick: uniform over the triangle simplex.
            let mut a: f64 = rng.gen_range(0.0..1.0);
            let mut b: f64 = rng.gen_range(0.0..1.0);
            if a + b > 1.0 {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            anchors.push(Anchor {
                face: face as u32,
                beta: Vector3::new(a, b, 1.0 - a - b),
            });
        }
    }
    let ncoef = num_sh_coeffs(sh_degree);
    let mut colors = vec![0.0; n * 3 * ncoef];
    let c0 = 0.5 / SH_C0;
    for comp in 0..n {
        for ch in 0..3 {
            colors[(comp * 3 + ch) * ncoef] = c0;
        }
    }
    let cloth = GaussianCloth {
        anchors,
        sh_degree,
        colors,
        scale_mult: vec![1.0 / (per_face as f64).sqrt(); n],
        epsilon: EPSILON_EDGE_RATIO * mesh.mean_edge_length(),
    };
    cloth.validate(mesh)?;
    Ok(cloth)
}

/// Per-frame realized state of every component.
#[derive(Debug, Clone)]
pub struct RealizedSplats {
    pub mu_w: Vec<Vector3<f64>>,
    pub mu_m: Vec<Vector2<f64>>,
    pub rot: Vec<Matrix3<f64>>,
    /// Scales with the per-component multiplier applied: `(eps, s2*m, s3*m)`.
    pub scales: Vec<Vector3<f64>>,
}

/// Realizes anchors against the current node positions: barycentric means,
/// face-frame orientation, multiplied in-plane scales.
pub fn realize(cloth: &GaussianCloth, mesh: &ClothMesh) -> Result<RealizedSplats> {
    let n = cloth.num_components();
    let mut out = RealizedSplats {
        mu_w: Vec::with_capacity(n),
        mu_m: Vec::with_capacity(n),
        rot: Vec::with_capacity(n),
        scales: Vec::with_capacity(n),
    };
    // Frames are per face; compute each once.
    let mut frames: Vec<Option<crate::geometry::FaceFrame>> = vec![None; mesh.num_faces()];
    for (i, a) in cloth.anchors.iter().enumerate() {
        let face = a.face as usize;
        if frames[face].is_none() {
            frames[face] = Some(mesh.face_frame(face, cloth.epsilon)?);
        }
        let frame = frames[face].as_ref().unwrap();
        let (w, m) = mesh.barycentric_point(face, &a.beta);
        let mult = cloth.scale_mult[i];
        out.mu_w.push(w);
        out.mu_m.push(m);
        out.rot.push(frame.rotation);
        out.scales.push(Vector3::new(
            frame.scales.x,
            frame.scales.y * mult,
            frame.scales.z * mult,
        ));
    }
    Ok(out)
}
