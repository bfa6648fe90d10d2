//! Dual-position opacity network.
//!
//! Opacity is a function, not a parameter: `alpha = f(mu_w, mu_m)` where
//! `mu_w` is the realized world position of a component and `mu_m` its fixed
//! material position. Both inputs pass through a sinusoidal encoding and a
//! small ReLU MLP with a logistic output. Either input can be masked off
//! (zeroed before encoding) for ablations; with the world input masked the
//! network degenerates to a fixed per-material-point opacity field.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Raw input coordinates: 3 world + 2 material.
const RAW_DIM: usize = 5;

/// Keeps the logistic output representable strictly inside (0, 1) in f64.
const LOGIT_CLAMP: f64 = 36.0;

#[derive(Debug, Clone)]
pub struct OpacityNet {
    /// Sinusoidal octaves per input coordinate.
    pub octaves: usize,
    /// Hidden layer width (two hidden layers).
    pub hidden: usize,
    pub use_world: bool,
    pub use_mesh: bool,
    /// Flat parameters: w1, b1, w2, b2, w3, b3.
    pub params: Vec<f64>,
}

/// Forward activations needed for the backward pass.
#[derive(Debug, Clone)]
pub struct OpacityCache {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub alpha: f64,
    masked: [f64; RAW_DIM],
}

impl OpacityNet {
    /// Fresh network with Xavier-uniform weights and zero biases.
    pub fn new(hidden: usize, octaves: usize, use_world: bool, use_mesh: bool, seed: u64) -> Result<Self> {
        if !use_world && !use_mesh {
            return Err(Error::InvalidInput("opacity net needs at least one input branch".into()));
        }
        if hidden == 0 {
            return Err(Error::InvalidInput("hidden width must be positive".into()));
        }
        let mut net = Self { octaves, hidden, use_world, use_mesh, params: Vec::new() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = net.in_dim();
        let h = hidden;
        let mut params = Vec::with_capacity(net.n_params());
        let layer = |rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n_w: usize, n_b: usize, out: &mut Vec<f64>| {
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..n_w {
                out.push(rng.gen_range(-lim..lim));
            }
            for _ in 0..n_b {
                out.push(0.0);
            }
        };
        layer(&mut rng, in_dim, h, in_dim * h, h, &mut params);
        layer(&mut rng, h, h, h * h, h, &mut params);
        layer(&mut rng, h, 1, h, 1, &mut params);
        net.params = params;
        Ok(net)
    }

    /// Defaults used by the training pipeline: width 64, 4 octaves.
    pub fn standard(use_world: bool, use_mesh: bool, seed: u64) -> Result<Self> {
        Self::new(64, 4, use_world, use_mesh, seed)
    }

    pub fn in_dim(&self) -> usize {
        RAW_DIM * (1 + 2 * self.octaves)
    }

    pub fn n_params(&self) -> usize {
        let (i, h) = (self.in_dim(), self.hidden);
        i * h + h + h * h + h + h + 1
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64], &[f64], f64) {
        let (i, h) = (self.in_dim(), self.hidden);
        let p = &self.params;
        let mut o = 0;
        let w1 = &p[o..o + i * h];
        o += i * h;
        let b1 = &p[o..o + h];
        o += h;
        let w2 = &p[o..o + h * h];
        o += h * h;
        let b2 = &p[o..o + h];
        o += h;
        let w3 = &p[o..o + h];
        o += h;
        (w1, b1, w2, b2, w3, p[o])
    }

    fn encode(&self, masked: &[f64; RAW_DIM], x: &mut Vec<f64>) {
        x.clear();
        for &c in masked {
            x.push(c);
            let mut freq = std::f64::consts::PI;
            for _ in 0..self.octaves {
                x.push((freq * c).sin());
                x.push((freq * c).cos());
                freq *= 2.0;
            }
        }
    }

    fn masked_inputs(&self, mu_w: &Vector3<f64>, mu_m: &Vector2<f64>) -> [f64; RAW_DIM] {
        let w = if self.use_world { 1.0 } else { 0.0 };
        let m = if self.use_mesh { 1.0 } else { 0.0 };
        [w * mu_w.x, w * mu_w.y, w * mu_w.z, m * mu_m.x, m * mu_m.y]
    }

    /// Opacity of one component, strictly inside (0, 1).
    pub fn opacity(&self, mu_w: &Vector3<f64>, mu_m: &Vector2<f64>) -> f64 {
        self.forward_cached(mu_w, mu_m).alpha
    }

    pub fn forward_cached(&self, mu_w: &Vector3<f64>, mu_m: &Vector2<f64>) -> OpacityCache {
        let (w1, b1, w2, b2, w3, b3) = self.split();
        let (i, h) = (self.in_dim(), self.hidden);
        let masked = self.masked_inputs(mu_w, mu_m);
        let mut x = Vec::with_capacity(i);
        self.encode(&masked, &mut x);
        let mut h1 = vec![0.0; h];
        for j in 0..h {
            let row = &w1[j * i..(j + 1) * i];
            let mut acc = b1[j];
            for k in 0..i {
                acc += row[k] * x[k];
            }
            h1[j] = acc.max(0.0);
        }
        let mut h2 = vec![0.0; h];
        for j in 0..h {
            let row = &w2[j * h..(j + 1) * h];
            let mut acc = b2[j];
            for k in 0..h {
                acc += row[k] * h1[k];
            }
            h2[j] = acc.max(0.0);
        }
        let mut z = b3;
        for k in 0..h {
            z += w3[k] * h2[k];
        }
        let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
        let alpha = 1.0 / (1.0 + (-z).exp());
        OpacityCache { x, h1, h2, alpha, masked }
    }

    /// Accumulates parameter gradients into `grad_params` (same layout as
    /// `params`) and returns gradients w.r.t. the unmasked inputs. Masked
    /// branches produce exact zeros.
    pub fn backward(
        &self,
        cache: &OpacityCache,
        d_alpha: f64,
        grad_params: &mut [f64],
    ) -> (Vector3<f64>, Vector2<f64>) {
        debug_assert_eq!(grad_params.len(), self.n_params());
        let (w1, _b1, w2, _b2, w3, _b3) = self.split();
        let (i, h) = (self.in_dim(), self.hidden);
        let a = cache.alpha;
        let dz = d_alpha * a * (1.0 - a);

        let (gw1, rest) = grad_params.split_at_mut(i * h);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, rest) = rest.split_at_mut(h * h);
        let (gb2, rest) = rest.split_at_mut(h);
        let (gw3, gb3) = rest.split_at_mut(h);

        gb3[0] += dz;
        let mut dh2 = vec![0.0; h];
        for k in 0..h {
            gw3[k] += dz * cache.h2[k];
            dh2[k] = if cache.h2[k] > 0.0 { dz * w3[k] } else { 0.0 };
        }
        let mut dh1 = vec![0.0; h];
        for j in 0..h {
            let d = dh2[j];
            if d == 0.0 {
                continue;
            }
            gb2[j] += d;
            let row = &w2[j * h..(j + 1) * h];
            let grow = &mut gw2[j * h..(j + 1) * h];
            for k in 0..h {
                grow[k] += d * cache.h1[k];
                dh1[k] += d * row[k];
            }
        }
        let mut dx = vec![0.0; i];
        for j in 0..h {
            let d = if cache.h1[j] > 0.0 { dh1[j] } else { 0.0 };
            if d == 0.0 {
                continue;
            }
            gb1[j] += d;
            let row = &w1[j * i..(j + 1) * i];
            let grow = &mut gw1[j * i..(j + 1) * i];
            for k in 0..i {
                grow[k] += d * cache.x[k];
                dx[k] += d * row[k];
            }
        }

        // Through the encoding back to the five raw coordinates.
        let per = 1 + 2 * self.octaves;
        let mut draw = [0.0; RAW_DIM];
        for c in 0..RAW_DIM {
            let base = c * per;
            let mut acc = dx[base];
            let mut freq = std::f64::consts::PI;
            for k in 0..self.octaves {
                let arg = freq * cache.masked[c];
                acc += dx[base + 1 + 2 * k] * freq * arg.cos();
                acc -= dx[base + 2 + 2 * k] * freq * arg.sin();
                freq *= 2.0;
            }
            draw[c] = acc;
        }
        let w = if self.use_world { 1.0 } else { 0.0 };
        let m = if self.use_mesh { 1.0 } else { 0.0 };
        (
            Vector3::new(w * draw[0], w * draw[1], w * draw[2]),
            Vector2::new(m * draw[3], m * draw[4]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_parameters_give_half_opacity() {
        let mut net = OpacityNet::new(16, 4, true, true, 0).unwrap();
        net.params.iter_mut().for_each(|p| *p = 0.0);
        let a = net.opacity(&Vector3::new(0.3, -2.0, 5.0), &Vector2::new(0.1, 0.9));
        assert_eq!(a, 0.5);
    }

    #[test]
    fn output_is_strictly_inside_unit_interval() {
        let mut net = OpacityNet::new(8, 2, true, true, 3).unwrap();
        // Force heavy saturation both ways through the output bias.
        let n = net.n_params();
        net.params[n - 1] = 1e9;
        let a = net.opacity(&Vector3::zeros(), &Vector2::zeros());
        assert!(a < 1.0 && a > 0.0);
        net.params[n - 1] = -1e9;
        let a = net.opacity(&Vector3::zeros(), &Vector2::zeros());
        assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn masked_world_branch_ignores_world_position() {
        let net = OpacityNet::new(16, 4, false, true, 7).unwrap();
        let m = Vector2::new(0.25, 0.75);
        let a = net.opacity(&Vector3::new(0.0, 0.0, 0.0), &m);
        let b = net.opacity(&Vector3::new(9.0, -4.0, 2.0), &m);
        assert_eq!(a, b);
        let cache = net.forward_cached(&Vector3::new(1.0, 2.0, 3.0), &m);
        let mut gp = vec![0.0; net.n_params()];
        let (dw, dm) = net.backward(&cache, 1.0, &mut gp);
        assert_eq!(dw, Vector3::zeros());
        assert!(dm.norm() >= 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = OpacityNet::new(8, 2, true, true, 11).unwrap();
        let mu_w = Vector3::new(0.31, -0.44, 0.97);
        let mu_m = Vector2::new(0.62, 0.18);
        let cache = net.forward_cached(&mu_w, &mu_m);
        let mut gp = vec![0.0; net.n_params()];
        let (dw, dm) = net.backward(&cache, 1.0, &mut gp);

        let h = 1e-6;
        // Parameters.
        for idx in (0..net.n_params()).step_by(17) {
            let mut np = net.clone();
            np.params[idx] += h;
            let up = np.opacity(&mu_w, &mu_m);
            np.params[idx] -= 2.0 * h;
            let dn = np.opacity(&mu_w, &mu_m);
            let fd = (up - dn) / (2.0 * h);
            assert_abs_diff_eq!(gp[idx], fd, epsilon = 1e-7);
        }
        // World input.
        for axis in 0..3 {
            let mut up = mu_w;
            let mut dn = mu_w;
            up[axis] += h;
            dn[axis] -= h;
            let fd = (net.opacity(&up, &mu_m) - net.opacity(&dn, &mu_m)) / (2.0 * h);
            assert_abs_diff_eq!(dw[axis], fd, epsilon = 1e-7);
        }
        // Material input.
        for axis in 0..2 {
            let mut up = mu_m;
            let mut dn = mu_m;
            up[axis] += h;
            dn[axis] -= h;
            let fd = (net.opacity(&mu_w, &up) - net.opacity(&mu_w, &dn)) / (2.0 * h);
            assert_abs_diff_eq!(dm[axis], fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn needs_at_least_one_branch() {
        assert!(OpacityNet::new(8, 2, false, false, 0).is_err());
    }
}
