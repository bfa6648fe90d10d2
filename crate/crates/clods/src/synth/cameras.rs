//! Evenly spaced inward-looking camera rings.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splat::Camera;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    /// Number of cameras.
    pub n: usize,
    /// Ring radius around `center`.
    pub radius: f64,
    /// Common look-at target.
    pub center: Vector3<f64>,
    /// Camera height offset above the target plane.
    pub height: f64,
    /// Square image side in pixels.
    pub resolution: usize,
}

impl Default for RingParams {
    fn default() -> Self {
        Self {
            n: 8,
            radius: 2.2,
            center: Vector3::new(0.5, 0.5, 0.0),
            height: 0.3,
            resolution: 64,
        }
    }
}

/// `n` identical cameras on a circle of `radius` in the y = center.y +
/// height plane, all aimed at `center`. Camera i sits at azimuth
/// pi/(2n) + 2*pi*i/n from the +x axis and takes id i. The phase offset
/// keeps every camera strictly off the x-y plane through the center
/// (azimuth would have to be a multiple of pi, and (4i+1)/(2n) is never
/// an integer), so a subject resting in that plane is never seen exactly
/// edge-on. Focal length is fixed at 1.5x the resolution, which frames a
/// unit-scale subject from a couple of units away with margin.
pub fn make_camera_ring(params: &RingParams) -> Result<Vec<Camera>> {
    if params.n == 0 {
        return Err(Error::InvalidParams("camera ring needs n >= 1".into()));
    }
    if !(params.radius > 0.0 && params.radius.is_finite()) {
        return Err(Error::InvalidParams(format!("ring radius {}", params.radius)));
    }
    if params.resolution == 0 {
        return Err(Error::InvalidParams("resolution must be positive".into()));
    }
    let fx = 1.5 * params.resolution as f64;
    (0..params.n)
        .map(|i| {
            let n = params.n as f64;
            let angle = std::f64::consts::PI / (2.0 * n) + std::f64::consts::TAU * i as f64 / n;
            let eye = params.center
                + Vector3::new(
                    params.radius * angle.cos(),
                    params.height,
                    params.radius * angle.sin(),
                );
            Camera::look_at(
                i as u32,
                eye,
                params.center,
                Vector3::y(),
                fx,
                params.resolution,
                params.resolution,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix3;

    #[test]
    fn single_camera_faces_the_rest_plane() {
        let params = RingParams { n: 1, ..RingParams::default() };
        let cams = make_camera_ring(&params).unwrap();
        assert_eq!(cams.len(), 1);
        // Phase pi/2 for n = 1: the lone camera sits on the +z side.
        let eye = cams[0].position();
        assert_abs_diff_eq!(eye.x, params.center.x, epsilon = 1e-12);
        assert_abs_diff_eq!(eye.z, params.center.z + params.radius, epsilon = 1e-12);
    }

    #[test]
    fn no_ring_camera_lies_in_the_subject_plane() {
        for n in 1..=16 {
            let params = RingParams { n, ..RingParams::default() };
            for cam in make_camera_ring(&params).unwrap() {
                let off_plane = (cam.position().z - params.center.z).abs();
                assert!(off_plane > 0.1, "n={n} camera {} edge-on", cam.id);
            }
        }
    }

    #[test]
    fn every_optical_axis_passes_through_the_center() {
        let params = RingParams { n: 13, ..RingParams::default() };
        for cam in make_camera_ring(&params).unwrap() {
            // The target must project exactly onto the principal point.
            let px = cam.project_point(&params.center).unwrap();
            assert_abs_diff_eq!(px.x, cam.cx, epsilon = 1e-9);
            assert_abs_diff_eq!(px.y, cam.cy, epsilon = 1e-9);
        }
    }

    #[test]
    fn ring_views_triangulate_a_point_consistently() {
        let params = RingParams { n: 30, ..RingParams::default() };
        let cams = make_camera_ring(&params).unwrap();
        let target = Vector3::new(0.61, 0.43, 0.12);
        // Linear triangulation: each view contributes two rays' worth of
        // constraints; accumulate the normal equations of
        // sum_i || (I - d_i d_i^T) (p - o_i) ||^2 over camera centers o_i
        // and back-projected pixel directions d_i.
        let mut a = Matrix3::zeros();
        let mut b = Vector3::zeros();
        for cam in &cams {
            let px = cam.project_point(&target).unwrap();
            let dir_cam = Vector3::new((px.x - cam.cx) / cam.fx, (px.y - cam.cy) / cam.fy, 1.0);
            let dir = (cam.rotation().transpose() * dir_cam).normalize();
            let o = cam.position();
            let m = Matrix3::identity() - dir * dir.transpose();
            a += m;
            b += m * o;
        }
        let recovered = a.try_inverse().unwrap() * b;
        assert_abs_diff_eq!((recovered - target).norm(), 0.0, epsilon = 1e-6);
    }
}
