//! Reverse-mode gradients for the renderer and a first-order optimizer.
//!
//! [`render_backward`] pulls a pixel-space gradient back through the full
//! render: compositing, Gaussian footprints, the EWA projection, the face
//! frames, the opacity net, and the spherical-harmonic colors, down to node
//! positions and every learnable parameter. The chain is written out
//! analytically; the only things held fixed are the depth-sort order and
//! footprint membership, which are genuinely discontinuous in the model.
//!
//! [`adam_step`] is a standard bias-corrected Adam, and [`grad_check`]
//! compares any analytic gradient against central differences.

mod adam;
mod backward;
mod check;

pub use adam::{adam_step, adam_step_masked, AdamHyper, AdamState};
pub use backward::render_backward;
pub use check::{grad_check, GradCheckReport};

use crate::error::{Error, Result};
use crate::geometry::ClothMesh;
use crate::splat::{GaussianCloth, OpacityNet};

/// Gradients of a scalar loss with respect to everything the pipeline can
/// optimize. Layouts match the parameter containers element for element.
#[derive(Debug, Clone)]
pub struct GradBundle {
    /// Per-node world-position gradient.
    pub d_node_pos: Vec<nalgebra::Vector3<f64>>,
    /// Flat, same layout as [`OpacityNet::params`].
    pub d_net_params: Vec<f64>,
    /// Flat, same layout as [`GaussianCloth::colors`].
    pub d_colors: Vec<f64>,
    pub d_scale_mult: Vec<f64>,
}

impl GradBundle {
    pub fn zeros(cloth: &GaussianCloth, mesh: &ClothMesh, net: &OpacityNet) -> Self {
        Self {
            d_node_pos: vec![nalgebra::Vector3::zeros(); mesh.num_nodes()],
            d_net_params: vec![0.0; net.n_params()],
            d_colors: vec![0.0; cloth.colors.len()],
            d_scale_mult: vec![0.0; cloth.num_components()],
        }
    }

    /// Element-wise accumulate. Shapes must agree.
    pub fn add(&mut self, other: &GradBundle) -> Result<()> {
        if self.d_node_pos.len() != other.d_node_pos.len()
            || self.d_net_params.len() != other.d_net_params.len()
            || self.d_colors.len() != other.d_colors.len()
            || self.d_scale_mult.len() != other.d_scale_mult.len()
        {
            return Err(Error::ShapeMismatch("gradient bundles".into()));
        }
        for (a, b) in self.d_node_pos.iter_mut().zip(&other.d_node_pos) {
            *a += b;
        }
        for (a, b) in self.d_net_params.iter_mut().zip(&other.d_net_params) {
            *a += b;
        }
        for (a, b) in self.d_colors.iter_mut().zip(&other.d_colors) {
            *a += b;
        }
        for (a, b) in self.d_scale_mult.iter_mut().zip(&other.d_scale_mult) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.d_node_pos.iter_mut().for_each(|v| *v *= factor);
        self.d_net_params.iter_mut().for_each(|v| *v *= factor);
        self.d_colors.iter_mut().for_each(|v| *v *= factor);
        self.d_scale_mult.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.d_node_pos.iter().all(|v| v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
            && self.d_net_params.iter().all(|v| v.is_finite())
            && self.d_colors.iter().all(|v| v.is_finite())
            && self.d_scale_mult.iter().all(|v| v.is_finite())
    }
}
