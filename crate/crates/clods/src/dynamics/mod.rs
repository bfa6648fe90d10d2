//! Learned cloth dynamics: an encode-process-decode graph network over the
//! mesh, trained to predict per-node accelerations from the two most recent
//! states.
//!
//! The state of the cloth at time t is the pair (x_{t-1}, x_t) of node
//! position arrays. [`build_graph`] turns such a pair into node and edge
//! features, [`gnn_forward`] predicts normalized accelerations,
//! [`integrate`] steps the positions, and [`rollout`] iterates the loop.
//! [`train_gnn`] fits the parameters to recorded trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod graph;
mod net;
mod train;

pub use graph::{build_graph, graph_backward, MeshGraph, EDGE_FEATS, NODE_FEATS};
pub use net::{
    gnn_backward, gnn_forward, zero_decoder_output, GnnCache, GnnParams, NormStats, Normalizer,
    ACCEL_DIM,
};
pub use train::{integrate, read_train_log, rollout, train_gnn, write_train_log, TrainLogRow};

/// Hyperparameters for [`train_gnn`] and the network it builds.
///
/// Defaults are sized for a few hundred nodes and a few dozen short
/// trajectories; `width` and `blocks` scale capacity, `rollout_t` sets the
/// length of the training windows sampled from each trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden width of every MLP in the network.
    pub width: usize,
    /// Number of message-passing blocks between encoder and decoder.
    pub blocks: usize,
    /// Training window length: windows of `rollout_t` consecutive steps are
    /// sampled and supervised position-by-position.
    pub rollout_t: usize,
    /// Passes over the sampled window set.
    pub epochs: usize,
    /// Adam learning rate.
    pub lr: f64,
    /// Input noise scale as a multiple of the per-step displacement
    /// standard deviation. Targets are corrected so the network learns to
    /// return to the clean trajectory.
    pub noise_mult: f64,
    /// Epoch stride for evaluating held-out rollout RMSE (it costs a full
    /// rollout per held-out trajectory). The final epoch always evaluates.
    pub eval_every: usize,
    /// Seed for parameter init, window sampling, and noise.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            width: 128,
            blocks: 8,
            rollout_t: 8,
            epochs: 1000,
            lr: 1e-3,
            noise_mult: 0.3,
            eval_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.blocks == 0 {
            return Err(Error::InvalidParams("width and blocks must be positive".into()));
        }
        if self.rollout_t == 0 {
            return Err(Error::InvalidParams("rollout_t must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParams("epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParams(format!("bad learning rate {}", self.lr)));
        }
        if !(self.noise_mult >= 0.0 && self.noise_mult.is_finite()) {
            return Err(Error::InvalidParams(format!("bad noise_mult {}", self.noise_mult)));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParams("eval_every must be positive".into()));
        }
        Ok(())
    }
}
