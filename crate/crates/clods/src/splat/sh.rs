//! Real spherical harmonics up to degree 3 for view-dependent color.
//!
//! The basis is evaluated on unit view directions. Degree 0 is the default
//! (view-independent color); higher bands are opt-in. Coefficients combine
//! linearly: `rgb[ch] = sum_k c[ch][k] * y[k](dir)`.

use nalgebra::Vector3;

/// Y_0^0, the constant band.
pub const SH_C0: f64 = 0.28209479177387814;

const C1: f64 = 0.4886025119029199;
const C2: [f64; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
const C3: [f64; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

pub const MAX_SH_COEFFS: usize = 16;

pub fn num_sh_coeffs(degree: u8) -> usize {
    let d = degree as usize;
    (d + 1) * (d + 1)
}

/// Basis values for all coefficients of `degree`; entries past the active
/// count are zero.
pub fn eval_sh(degree: u8, dir: &Vector3<f64>) -> [f64; MAX_SH_COEFFS] {
    let mut y = [0.0; MAX_SH_COEFFS];
    let (x, yy, z) = (dir.x, dir.y, dir.z);
    y[0] = SH_C0;
    if degree >= 1 {
        y[1] = -C1 * yy;
        y[2] = C1 * z;
        y[3] = -C1 * x;
    }
    if degree >= 2 {
        let (xx, yy2, zz) = (x * x, yy * yy, z * z);
        y[4] = C2[0] * x * yy;
        y[5] = C2[1] * yy * z;
        y[6] = C2[2] * (2.0 * zz - xx - yy2);
        y[7] = C2[3] * x * z;
        y[8] = C2[4] * (xx - yy2);
    }
    if degree >= 3 {
        let (xx, yy2, zz) = (x * x, yy * yy, z * z);
        y[9] = C3[0] * yy * (3.0 * xx - yy2);
        y[10] = C3[1] * x * yy * z;
        y[11] = C3[2] * yy * (4.0 * zz - xx - yy2);
        y[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy2);
        y[13] = C3[4] * x * (4.0 * zz - xx - yy2);
        y[14] = C3[5] * z * (xx - yy2);
        y[15] = C3[6] * x * (xx - 3.0 * yy2);
    }
    y
}

/// Basis values plus the Jacobian d y_k / d dir (as a raw polynomial in the
/// direction components, before any normalization of `dir`).
pub fn eval_sh_jacobian(
    degree: u8,
    dir: &Vector3<f64>,
) -> ([f64; MAX_SH_COEFFS], [Vector3<f64>; MAX_SH_COEFFS]) {
    let y = eval_sh(degree, dir);
    let mut j = [Vector3::zeros(); MAX_SH_COEFFS];
    let (x, yy, z) = (dir.x, dir.y, dir.z);
    if degree >= 1 {
        j[1] = Vector3::new(0.0, -C1, 0.0);
        j[2] = Vector3::new(0.0, 0.0, C1);
        j[3] = Vector3::new(-C1, 0.0, 0.0);
    }
    if degree >= 2 {
        j[4] = C2[0] * Vector3::new(yy, x, 0.0);
        j[5] = C2[1] * Vector3::new(0.0, z, yy);
        j[6] = C2[2] * Vector3::new(-2.0 * x, -2.0 * yy, 4.0 * z);
        j[7] = C2[3] * Vector3::new(z, 0.0, x);
        j[8] = C2[4] * Vector3::new(2.0 * x, -2.0 * yy, 0.0);
    }
    if degree >= 3 {
        let (xx, yy2, zz) = (x * x, yy * yy, z * z);
        j[9] = C3[0] * Vector3::new(6.0 * x * yy, 3.0 * xx - 3.0 * yy2, 0.0);
        j[10] = C3[1] * Vector3::new(yy * z, x * z, x * yy);
        j[11] = C3[2] * Vector3::new(-2.0 * x * yy, 4.0 * zz - xx - 3.0 * yy2, 8.0 * yy * z);
        j[12] = C3[3] * Vector3::new(-6.0 * x * z, -6.0 * yy * z, 6.0 * zz - 3.0 * xx - 3.0 * yy2);
        j[13] = C3[4] * Vector3::new(4.0 * zz - 3.0 * xx - yy2, -2.0 * x * yy, 8.0 * x * z);
        j[14] = C3[5] * Vector3::new(2.0 * x * z, -2.0 * yy * z, xx - yy2);
        j[15] = C3[6] * Vector3::new(3.0 * xx - 3.0 * yy2, -6.0 * x * yy, 0.0);
    }
    (y, j)
}
