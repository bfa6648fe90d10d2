//! Pinhole cameras.
//!
//! Convention: camera space has +z along the viewing direction, x along
//! image u (right) and y along image v (down); a world point `p` maps to
//! `u = fx * X/Z + cx`, `v = fy * Y/Z + cy` with `(X,Y,Z) = R p + t`.
//! Pixel `(x, y)` covers the unit square centered at `(x+0.5, y+0.5)`.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Camera {
    pub id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Rigid world-to-camera transform, row-major rotation in the upper 3x3.
    pub world_to_cam: Matrix4<f64>,
}

impl Camera {
    pub fn new(
        id: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        world_to_cam: Matrix4<f64>,
    ) -> Result<Self> {
        let cam = Self { id, fx, fy, cx, cy, width, height, world_to_cam };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera on a point `eye` looking at `center`, world `up` defining the
    /// image vertical. Points above the look-at axis render above the
    /// principal point.
    pub fn look_at(
        id: u32,
        eye: Vector3<f64>,
        center: Vector3<f64>,
        up: Vector3<f64>,
        fx: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let f = center - eye;
        if f.norm() < 1e-12 {
            return Err(Error::InvalidCamera("eye equals look-at center".into()));
        }
        let f = f.normalize();
        let x = f.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::InvalidCamera("viewing direction parallel to up".into()));
        }
        let x = x.normalize();
        let y = f.cross(&x);
        let mut m = Matrix4::identity();
        for c in 0..3 {
            m[(0, c)] = x[c];
            m[(1, c)] = y[c];
            m[(2, c)] = f[c];
        }
        let r = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t = -(r * eye);
        m[(0, 3)] = t.x;
        m[(1, 3)] = t.y;
        m[(2, 3)] = t.z;
        Self::new(
            id,
            fx,
            fx,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            m,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("non-positive intrinsics".into()));
        }
        for v in self.world_to_cam.iter() {
            if !v.is_finite() {
                return Err(Error::InvalidCamera("non-finite extrinsics".into()));
            }
        }
        let r = self.rotation();
        let gram = r.transpose() * r;
        if (gram - Matrix3::identity()).amax() > 1e-9 {
            return Err(Error::InvalidCamera("rotation not orthonormal".into()));
        }
        if (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidCamera("rotation is a reflection".into()));
        }
        let last = self.world_to_cam.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidCamera("last row must be [0,0,0,1]".into()));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_cam.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_cam.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.translation())
    }

    #[inline]
    pub fn to_cam(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// Projects a camera-space point to pixel coordinates.
    #[inline]
    pub fn cam_to_pixel(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// World point straight to pixel coordinates; `None` behind the camera.
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        let c = self.to_cam(p);
        (c.z > 0.0).then(|| self.cam_to_pixel(&c))
    }
}
