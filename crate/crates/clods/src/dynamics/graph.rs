//! Mesh-to-graph feature extraction for the dynamics network.
//!
//! Features deliberately exclude absolute world position: nodes carry a
//! pinned/free one-hot and the last-step velocity, edges carry relative
//! world and UV displacements with their norms. Translating both input
//! frames therefore leaves every feature bit-identical, which is what
//! makes the learned dynamics translation-invariant by construction.
//!
//! Features are produced in raw physical units; the network normalizes
//! with its stored statistics at the start of the forward pass.

use nalgebra::Vector3;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::ClothMesh;

/// Node feature width: [free, pinned] one-hot + velocity xyz.
pub const NODE_FEATS: usize = 5;
/// Edge feature width: world displacement + norm, UV displacement + norm.
pub const EDGE_FEATS: usize = 7;

/// A cloth state encoded for message passing. Every undirected mesh edge
/// appears twice, once per direction, so messages flow both ways.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGraph {
    /// Source node of each directed edge.
    pub senders: Vec<u32>,
    /// Destination node of each directed edge.
    pub receivers: Vec<u32>,
    /// K x NODE_FEATS, raw units.
    pub node_feats: Array2<f64>,
    /// 2E x EDGE_FEATS, raw units; row i describes senders[i] -> receivers[i].
    pub edge_feats: Array2<f64>,
}

impl MeshGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_feats.nrows()
    }

    pub fn num_directed_edges(&self) -> usize {
        self.senders.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.senders.len() != self.receivers.len()
            || self.senders.len() != self.edge_feats.nrows()
        {
            return Err(Error::GraphMismatch(format!(
                "{} senders, {} receivers, {} edge feature rows",
                self.senders.len(),
                self.receivers.len(),
                self.edge_feats.nrows()
            )));
        }
        if self.node_feats.ncols() != NODE_FEATS || self.edge_feats.ncols() != EDGE_FEATS {
            return Err(Error::GraphMismatch(format!(
                "feature widths {}x{}, expected {NODE_FEATS}x{EDGE_FEATS}",
                self.node_feats.ncols(),
                self.edge_feats.ncols()
            )));
        }
        let k = self.num_nodes() as u32;
        if self.senders.iter().chain(&self.receivers).any(|&n| n >= k) {
            return Err(Error::GraphMismatch("edge endpoint out of range".into()));
        }
        let finite = self.node_feats.iter().chain(self.edge_feats.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::GraphMismatch("non-finite feature".into()));
        }
        Ok(())
    }
}

/// Encodes the state pair (previous frame, current frame) over the mesh
/// topology. Velocity is the finite difference `x_now - x_prev`; edge
/// displacements point from sender to receiver, so flipping a directed
/// edge negates them and keeps the norms.
pub fn build_graph(
    x_prev: &[Vector3<f64>],
    x_now: &[Vector3<f64>],
    mesh: &ClothMesh,
) -> Result<MeshGraph> {
    let k = mesh.num_nodes();
    if x_prev.len() != k || x_now.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} previous / {} current positions for a {k}-node mesh",
            x_prev.len(),
            x_now.len()
        )));
    }

    let mut node_feats = Array2::zeros((k, NODE_FEATS));
    for i in 0..k {
        let pinned = mesh.is_pinned(i);
        node_feats[[i, 0]] = if pinned { 0.0 } else { 1.0 };
        node_feats[[i, 1]] = if pinned { 1.0 } else { 0.0 };
        let v = x_now[i] - x_prev[i];
        node_feats[[i, 2]] = v.x;
        node_feats[[i, 3]] = v.y;
        node_feats[[i, 4]] = v.z;
    }

    let e_dir = 2 * mesh.edges.len();
    let mut senders = Vec::with_capacity(e_dir);
    let mut receivers = Vec::with_capacity(e_dir);
    let mut edge_feats = Array2::zeros((e_dir, EDGE_FEATS));
    for (e, &[a, b]) in mesh.edges.iter().enumerate() {
        for (row, s, r) in [(2 * e, a, b), (2 * e + 1, b, a)] {
            senders.push(s);
            receivers.push(r);
            let dw = x_now[r as usize] - x_now[s as usize];
            let dm = mesh.mesh_pos[r as usize] - mesh.mesh_pos[s as usize];
            edge_feats[[row, 0]] = dw.x;
            edge_feats[[row, 1]] = dw.y;
            edge_feats[[row, 2]] = dw.z;
            edge_feats[[row, 3]] = dw.norm();
            edge_feats[[row, 4]] = dm.x;
            edge_feats[[row, 5]] = dm.y;
            edge_feats[[row, 6]] = dm.norm();
        }
    }

    let graph = MeshGraph { senders, receivers, node_feats, edge_feats };
    graph.validate()?;
    Ok(graph)
}

/// Routes gradients with respect to the raw features back to the two
/// position frames. The displacement direction needed for the norm terms
/// is read from the cached feature rows, so the graph must be the one
/// `build_graph` produced for these frames.
pub fn graph_backward(
    graph: &MeshGraph,
    d_node_feats: &Array2<f64>,
    d_edge_feats: &Array2<f64>,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
    if d_node_feats.dim() != graph.node_feats.dim() || d_edge_feats.dim() != graph.edge_feats.dim()
    {
        return Err(Error::ShapeMismatch(format!(
            "gradient shapes {:?}/{:?} vs features {:?}/{:?}",
            d_node_feats.dim(),
            d_edge_feats.dim(),
            graph.node_feats.dim(),
            graph.edge_feats.dim()
        )));
    }
    let k = graph.num_nodes();
    let mut d_prev = vec![Vector3::zeros(); k];
    let mut d_now = vec![Vector3::zeros(); k];

    for i in 0..k {
        let dv = Vector3::new(d_node_feats[[i, 2]], d_node_feats[[i, 3]], d_node_feats[[i, 4]]);
        d_now[i] += dv;
        d_prev[i] -= dv;
    }

    for row in 0..graph.num_directed_edges() {
        let s = graph.senders[row] as usize;
        let r = graph.receivers[row] as usize;
        let mut dd = Vector3::new(
            d_edge_feats[[row, 0]],
            d_edge_feats[[row, 1]],
            d_edge_feats[[row, 2]],
        );
        let dw = Vector3::new(
            graph.edge_feats[[row, 0]],
            graph.edge_feats[[row, 1]],
            graph.edge_feats[[row, 2]],
        );
        let norm = graph.edge_feats[[row, 3]];
        if norm > 1e-12 {
            dd += d_edge_feats[[row, 3]] * dw / norm;
        }
        d_now[r] += dd;
        d_now[s] -= dd;
        // UV columns are constant in time and carry no position gradient.
    }

    Ok((d_prev, d_now))
}
