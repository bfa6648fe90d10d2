//! Perspective projection of anisotropic Gaussians (EWA splatting).
//!
//! A 3D Gaussian with covariance `R diag(s)^2 R^T` is pushed through the
//! camera by linearizing the projection at its mean: `cov2d = J W Sigma W^T
//! J^T` where `W` is the world-to-camera rotation and `J` the Jacobian of
//! perspective division. A small isotropic dilation keeps footprints at
//! least a fraction of a pixel wide so thin splats still land on samples.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::splat::Camera;

/// Added to both diagonal entries of every 2D covariance (pixels^2).
pub const COV2D_DILATION: f64 = 0.3;

/// Components closer than this (camera z, world units) are culled.
pub const NEAR_PLANE: f64 = 0.01;

/// One component's screen-space footprint.
#[derive(Debug, Clone, Copy)]
pub struct Projected {
    /// Pixel-space mean.
    pub mean2d: Vector2<f64>,
    /// Dilated 2D covariance.
    pub cov2d: Matrix2<f64>,
    /// Camera-space depth used for sorting.
    pub depth: f64,
    /// Camera-space mean (kept for the backward pass).
    pub mu_cam: Vector3<f64>,
}

impl Projected {
    /// Inverse covariance as (a, b, c) of [[a, b], [b, c]], plus its
    /// determinant. Fails if the dilated covariance is not positive
    /// definite, which only happens on non-finite input.
    pub fn cov_inv(&self, component: usize) -> Result<([f64; 3], f64)> {
        let (a, b, c) = (self.cov2d[(0, 0)], self.cov2d[(0, 1)], self.cov2d[(1, 1)]);
        let det = a * c - b * b;
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::DegenerateCovariance { component });
        }
        Ok(([c / det, -b / det, a / det], det))
    }

    /// Conservative half-extent of the 3-sigma footprint in pixels.
    pub fn radius(&self) -> f64 {
        let (a, b, c) = (self.cov2d[(0, 0)], self.cov2d[(0, 1)], self.cov2d[(1, 1)]);
        let mid = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        3.0 * (mid + disc).max(0.0).sqrt()
    }
}

/// Builds the world-space covariance `R diag(scales)^2 R^T`.
pub fn world_covariance(rotation: &Matrix3<f64>, scales: &Vector3<f64>) -> Matrix3<f64> {
    let d = Matrix3::from_diagonal(&scales.map(|s| s * s));
    rotation * d * rotation.transpose()
}

/// Jacobian of (X, Y, Z) -> (fx X/Z + cx, fy Y/Z + cy) at a camera-space point.
pub fn projection_jacobian(camera: &Camera, mu_cam: &Vector3<f64>) -> Matrix3<f64> {
    let (x, y, z) = (mu_cam.x, mu_cam.y, mu_cam.z);
    let inv_z = 1.0 / z;
    let inv_z2 = inv_z * inv_z;
    // Third row is zero: depth does not re-enter the 2D footprint.
    Matrix3::new(
        camera.fx * inv_z, 0.0, -camera.fx * x * inv_z2,
        0.0, camera.fy * inv_z, -camera.fy * y * inv_z2,
        0.0, 0.0, 0.0,
    )
}

/// Projects one component. Errors with [`Error::BehindCamera`] when the mean
/// is on or behind the near plane.
pub fn project_gaussian(
    camera: &Camera,
    mu_w: &Vector3<f64>,
    rotation: &Matrix3<f64>,
    scales: &Vector3<f64>,
) -> Result<Projected> {
    let mu_cam = camera.to_cam(mu_w);
    if mu_cam.z < NEAR_PLANE {
        return Err(Error::BehindCamera);
    }
    let mean2d = Vector2::new(
        camera.fx * mu_cam.x / mu_cam.z + camera.cx,
        camera.fy * mu_cam.y / mu_cam.z + camera.cy,
    );
    let w = camera.rotation();
    let cov_cam = w * world_covariance(rotation, scales) * w.transpose();
    let j = projection_jacobian(camera, &mu_cam);
    let full = j * cov_cam * j.transpose();
    let cov2d = Matrix2::new(
        full[(0, 0)] + COV2D_DILATION, full[(0, 1)],
        full[(1, 0)], full[(1, 1)] + COV2D_DILATION,
    );
    Ok(Projected { mean2d, cov2d, depth: mu_cam.z, mu_cam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix4;

    fn axis_camera() -> Camera {
        Camera::new(0, 100.0, 100.0, 32.0, 32.0, 64, 64, Matrix4::identity()).unwrap()
    }

    #[test]
    fn spherical_gaussian_on_axis_has_closed_form_footprint() {
        let cam = axis_camera();
        let s = 0.05;
        let z = 2.5;
        let p = project_gaussian(
            &cam,
            &Vector3::new(0.0, 0.0, z),
            &Matrix3::identity(),
            &Vector3::new(s, s, s),
        )
        .unwrap();
        let expect = (cam.fx * s / z).powi(2) + COV2D_DILATION;
        assert_abs_diff_eq!(p.mean2d.x, 32.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mean2d.y, 32.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.cov2d[(0, 0)], expect, epsilon = 1e-12);
        assert_abs_diff_eq!(p.cov2d[(1, 1)], expect, epsilon = 1e-12);
        assert_abs_diff_eq!(p.cov2d[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.depth, z, epsilon = 1e-12);
    }

    #[test]
    fn rotation_of_spherical_gaussian_changes_nothing() {
        let cam = axis_camera();
        let s = Vector3::new(0.03, 0.03, 0.03);
        let mu = Vector3::new(0.4, -0.2, 3.0);
        let base = project_gaussian(&cam, &mu, &Matrix3::identity(), &s).unwrap();
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 0.7);
        let turned = project_gaussian(&cam, &mu, rot.matrix(), &s).unwrap();
        assert_abs_diff_eq!(base.cov2d, turned.cov2d, epsilon = 1e-12);
    }

    #[test]
    fn footprint_shrinks_quadratically_with_distance() {
        let cam = axis_camera();
        let s = Vector3::new(0.05, 0.05, 0.05);
        let near = project_gaussian(&cam, &Vector3::new(0.0, 0.0, 1.0), &Matrix3::identity(), &s).unwrap();
        let far = project_gaussian(&cam, &Vector3::new(0.0, 0.0, 2.0), &Matrix3::identity(), &s).unwrap();
        let near_raw = near.cov2d[(0, 0)] - COV2D_DILATION;
        let far_raw = far.cov2d[(0, 0)] - COV2D_DILATION;
        assert_abs_diff_eq!(near_raw / far_raw, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = axis_camera();
        let s = Vector3::new(0.01, 0.01, 0.01);
        let r = project_gaussian(&cam, &Vector3::new(0.0, 0.0, -1.0), &Matrix3::identity(), &s);
        assert!(matches!(r, Err(Error::BehindCamera)));
        let r = project_gaussian(&cam, &Vector3::new(0.0, 0.0, 0.0), &Matrix3::identity(), &s);
        assert!(matches!(r, Err(Error::BehindCamera)));
    }

    #[test]
    fn cov_inv_matches_nalgebra_inverse() {
        let cam = axis_camera();
        let p = project_gaussian(
            &cam,
            &Vector3::new(0.3, 0.2, 2.0),
            &Matrix3::identity(),
            &Vector3::new(0.1, 0.02, 0.005),
        )
        .unwrap();
        let ([a, b, c], det) = p.cov_inv(0).unwrap();
        let inv = p.cov2d.try_inverse().unwrap();
        assert_abs_diff_eq!(a, inv[(0, 0)], epsilon = 1e-12);
        assert_abs_diff_eq!(b, inv[(0, 1)], epsilon = 1e-12);
        assert_abs_diff_eq!(c, inv[(1, 1)], epsilon = 1e-12);
        assert_abs_diff_eq!(det, p.cov2d.determinant(), epsilon = 1e-12);
    }

    #[test]
    fn radius_bounds_the_major_axis() {
        let cov = Matrix2::new(4.0, 1.5, 1.5, 2.0);
        let p = Projected {
            mean2d: Vector2::zeros(),
            cov2d: cov,
            depth: 1.0,
            mu_cam: Vector3::new(0.0, 0.0, 1.0),
        };
        let eig = cov.symmetric_eigen();
        let lmax = eig.eigenvalues.max();
        assert_abs_diff_eq!(p.radius(), 3.0 * lmax.sqrt(), epsilon = 1e-12);
    }
}
