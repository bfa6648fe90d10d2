//! Cloth meshes and per-face orthonormal frames.
//!
//! A cloth is a triangulated surface with a fixed 2D material
//! parameterization: every node carries a world position that changes over
//! time and a UV coordinate in `[0,1]^2` that never does. Splat components
//! are anchored to faces barycentrically, so everything downstream needs
//! fast, differentiable access to face geometry. The orthonormal frame of a
//! face defines the orientation and in-plane extents of the Gaussians bound
//! to it.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Relative area threshold below which a face counts as degenerate.
/// Scaled by the squared mean edge length of the initial mesh.
pub const DEGENERATE_AREA_REL: f64 = 1e-12;

/// A triangulated cloth surface.
///
/// `world_pos` is mutated freely by extraction and simulation; the topology
/// (`faces`, `edges`, `mesh_pos`, `pinned`) is fixed at construction.
/// `edges` is derived from `faces`: undirected, deduplicated, each stored as
/// `[min, max]` and sorted lexicographically.
#[derive(Debug, Clone)]
pub struct ClothMesh {
    /// Node positions in world space, meters.
    pub world_pos: Vec<Vector3<f64>>,
    /// Fixed material coordinates in `[0,1]^2`, one per node.
    pub mesh_pos: Vec<Vector2<f64>>,
    /// Counter-clockwise vertex index triples.
    pub faces: Vec<[u32; 3]>,
    /// Derived undirected edges, `[min, max]`, lexicographically sorted.
    pub edges: Vec<[u32; 2]>,
    /// Sorted, deduplicated indices of nodes with scripted motion.
    pub pinned: Vec<u32>,
    /// Absolute face-area degeneracy threshold, fixed from the initial mesh.
    degen_area: f64,
}

impl ClothMesh {
    /// Builds a mesh and validates it. Edges are derived from `faces`.
    pub fn new(
        world_pos: Vec<Vector3<f64>>,
        mesh_pos: Vec<Vector2<f64>>,
        faces: Vec<[u32; 3]>,
        pinned: Vec<u32>,
    ) -> Result<Self> {
        let mut pinned = pinned;
        pinned.sort_unstable();
        pinned.dedup();
        let edges = derive_edges(&faces);
        let mut mesh = Self {
            world_pos,
            mesh_pos,
            faces,
            edges,
            pinned,
            degen_area: 0.0,
        };
        // First pass catches bad indices before any position lookups; the
        // degeneracy threshold needs the mean edge length, which is only
        // safe to compute once indices are known good.
        mesh.validate()?;
        let mean_edge = mean_edge_length(&mesh.world_pos, &mesh.edges);
        mesh.degen_area = DEGENERATE_AREA_REL * mean_edge * mean_edge;
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn num_nodes(&self) -> usize {
        self.world_pos.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Checks index bounds, UV range, face non-degeneracy (against the
    /// threshold fixed at construction) and pinned-index validity.
    pub fn validate(&self) -> Result<()> {
        let k = self.world_pos.len();
        if self.mesh_pos.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "{} world positions vs {} mesh positions",
                k,
                self.mesh_pos.len()
            )));
        }
        if k < 3 || self.faces.is_empty() {
            return Err(Error::UnsupportedMesh(
                "mesh needs at least 3 nodes and 1 face".into(),
            ));
        }
        for (i, p) in self.world_pos.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::UnsupportedMesh(format!(
                    "non-finite world position at node {i}"
                )));
            }
        }
        for (i, uv) in self.mesh_pos.iter().enumerate() {
            let ok = uv.x.is_finite() && uv.y.is_finite();
            let in_range = (-1e-9..=1.0 + 1e-9).contains(&uv.x)
                && (-1e-9..=1.0 + 1e-9).contains(&uv.y);
            if !ok || !in_range {
                return Err(Error::UnsupportedMesh(format!(
                    "mesh position {:?} at node {i} outside [0,1]^2",
                    (uv.x, uv.y)
                )));
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v as usize >= k {
                    return Err(Error::UnsupportedMesh(format!(
                        "face {fi} references node {v} of {k}"
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::UnsupportedMesh(format!(
                    "face {fi} repeats a vertex"
                )));
            }
            let area = face_area(
                &self.world_pos[f[0] as usize],
                &self.world_pos[f[1] as usize],
                &self.world_pos[f[2] as usize],
            );
            if area < self.degen_area {
                return Err(Error::DegenerateFace { face: fi, area });
            }
        }
        for &p in &self.pinned {
            if p as usize >= k {
                return Err(Error::UnsupportedMesh(format!(
                    "pinned index {p} out of range"
                )));
            }
        }
        Ok(())
    }

    /// Orthonormal frame and extents of a face at the current node
    /// positions. `epsilon` becomes the thickness scale `s1`.
    pub fn face_frame(&self, face: usize, epsilon: f64) -> Result<FaceFrame> {
        let f = self.faces[face];
        frame_from_vertices(
            &self.world_pos[f[0] as usize],
            &self.world_pos[f[1] as usize],
            &self.world_pos[f[2] as usize],
            epsilon,
            self.degen_area,
        )
        .map_err(|area| Error::DegenerateFace { face, area })
    }

    /// World and material coordinates of a barycentric point on a face.
    /// `beta` must be a convex combination (non-negative, summing to 1).
    pub fn barycentric_point(&self, face: usize, beta: &Vector3<f64>) -> (Vector3<f64>, Vector2<f64>) {
        let f = self.faces[face];
        let (a, b, c) = (f[0] as usize, f[1] as usize, f[2] as usize);
        let w = self.world_pos[a] * beta.x + self.world_pos[b] * beta.y + self.world_pos[c] * beta.z;
        let m = self.mesh_pos[a] * beta.x + self.mesh_pos[b] * beta.y + self.mesh_pos[c] * beta.z;
        (w, m)
    }

    /// Mean edge length at the current world positions.
    pub fn mean_edge_length(&self) -> f64 {
        mean_edge_length(&self.world_pos, &self.edges)
    }

    /// Axis-aligned bounding-box diagonal of the current world positions.
    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.world_pos)
    }

    pub fn is_pinned(&self, node: usize) -> bool {
        self.pinned.binary_search(&(node as u32)).is_ok()
    }
}

/// Orthonormal frame of a triangle plus the extents of a Gaussian bound to
/// it. Columns of `rotation` are, in order: the unit normal, the unit first
/// edge, and the in-plane direction orthogonal to both. `scales` holds the
/// raw extents `(epsilon, |v2-v1|, height of v3 over the first edge)`;
/// per-component multipliers are applied downstream.
#[derive(Debug, Clone, Copy)]
pub struct FaceFrame {
    pub rotation: Matrix3<f64>,
    pub scales: Vector3<f64>,
}

/// Twice wrapped by the public entry points; returns the offending area on
/// degeneracy so callers can attach the face index.
pub(crate) fn frame_from_vertices(
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
    v3: &Vector3<f64>,
    epsilon: f64,
    degen_area: f64,
) -> std::result::Result<FaceFrame, f64> {
    let e1 = v2 - v1;
    let e2 = v3 - v1;
    let n = e1.cross(&e2);
    let area = 0.5 * n.norm();
    if !(area.is_finite()) || area < degen_area {
        return Err(area);
    }
    let r1 = n / n.norm();
    let len1 = e1.norm();
    let r2 = e1 / len1;
    // One Gram-Schmidt step; e2 is already orthogonal to r1 up to rounding.
    let u = e2 - r1 * e2.dot(&r1) - r2 * e2.dot(&r2);
    let r3 = u / u.norm();
    let s3 = e2.dot(&r3);
    let mut rotation = Matrix3::zeros();
    rotation.set_column(0, &r1);
    rotation.set_column(1, &r2);
    rotation.set_column(2, &r3);
    Ok(FaceFrame {
        rotation,
        scales: Vector3::new(epsilon, len1, s3),
    })
}

pub fn face_area(v1: &Vector3<f64>, v2: &Vector3<f64>, v3: &Vector3<f64>) -> f64 {
    0.5 * (v2 - v1).cross(&(v3 - v1)).norm()
}

/// Undirected edge set of a triangle list: each edge `[min, max]`, unique,
/// lexicographically sorted. Deterministic for a given face list.
pub fn derive_edges(faces: &[[u32; 3]]) -> Vec<[u32; 2]> {
    let mut set = std::collections::BTreeSet::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            set.insert([a.min(b), a.max(b)]);
        }
    }
    set.into_iter().collect()
}

/// Length of every edge at the given positions, in edge order.
pub fn edge_lengths(positions: &[Vector3<f64>], edges: &[[u32; 2]]) -> Vec<f64> {
    edges
        .iter()
        .map(|e| (positions[e[0] as usize] - positions[e[1] as usize]).norm())
        .collect()
}

pub fn mean_edge_length(positions: &[Vector3<f64>], edges: &[[u32; 2]]) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    edge_lengths(positions, edges).iter().sum::<f64>() / edges.len() as f64
}

pub fn bbox_diagonal(positions: &[Vector3<f64>]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let mut lo = positions[0];
    let mut hi = positions[0];
    for p in positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}
