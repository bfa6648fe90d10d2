//! Synthetic ground truth: a mass-spring cloth simulator, camera-ring
//! construction, and a textured triangle rasterizer that shares no code with
//! the splat renderer.
//!
//! Everything here exists to manufacture datasets with known answers. The
//! simulator is not a faithful cloth model, just a deterministic generator
//! of plausible flapping-flag motion; the rasterizer is a plain z-buffered
//! perspective renderer so the splat pipeline can be validated against
//! images it had no hand in producing.

mod cameras;
mod dataset;
mod raster;
mod sim;

pub use cameras::{make_camera_ring, RingParams};
pub use dataset::{dataset_build, dataset_load, load_frame_set};
pub use raster::{checkerboard, render_ground_truth};
pub use sim::{flag_mesh, kinetic_energy, simulate_cloth, PinnedEdge, SimParams};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// A sequence of node position arrays over a fixed mesh topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `positions[t][k]` is node k's world position at step t.
    pub positions: Vec<Vec<Vector3<f64>>>,
    /// Simulation step length in seconds. Purely descriptive: dynamics
    /// learning and every metric work in per-step units.
    pub dt: f64,
}

impl Trajectory {
    pub fn new(positions: Vec<Vec<Vector3<f64>>>, dt: f64) -> Self {
        Self { positions, dt }
    }

    /// Number of steps T.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Number of nodes K (0 for an empty trajectory).
    pub fn num_nodes(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Uniform node count and finite coordinates.
    pub fn validate(&self) -> Result<()> {
        let k = self.num_nodes();
        for (t, frame) in self.positions.iter().enumerate() {
            if frame.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "trajectory step {t} has {} nodes, step 0 has {k}",
                    frame.len()
                )));
            }
            for (i, p) in frame.iter().enumerate() {
                if !p.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "non-finite position at step {t}, node {i}"
                    )));
                }
            }
        }
        Ok(())
    }
}
