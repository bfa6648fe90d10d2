//! Wavefront OBJ meshes with a pinned-node sidecar.
//!
//! Only the subset the pipeline produces is supported: `v x y z` world
//! positions, `vt u v` mesh-space coordinates, and `f a/a b/b c/c` faces
//! where position and UV indices coincide. Pinned node indices live next to
//! the OBJ in `<stem>.pinned.json` as `{"pinned":[i,...]}`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ClothMesh;

#[derive(Serialize, Deserialize)]
struct PinnedSidecar {
    pinned: Vec<u32>,
}

/// `mesh.obj` -> `mesh.pinned.json`.
fn sidecar_path(obj_path: &Path) -> PathBuf {
    obj_path.with_extension("pinned.json")
}

/// Writes the mesh as OBJ plus the pinned sidecar (always written, even
/// when no nodes are pinned, so a dataset directory is self-describing).
pub fn write_obj(mesh: &ClothMesh, path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in &mesh.world_pos {
        writeln!(out, "v {} {} {}", p.x, p.y, p.z).expect("string write");
    }
    for uv in &mesh.mesh_pos {
        writeln!(out, "vt {} {}", uv.x, uv.y).expect("string write");
    }
    for f in &mesh.faces {
        let (a, b, c) = (f[0] + 1, f[1] + 1, f[2] + 1);
        writeln!(out, "f {a}/{a} {b}/{b} {c}/{c}").expect("string write");
    }
    std::fs::write(path, out)?;
    let sidecar = serde_json::to_string(&PinnedSidecar { pinned: mesh.pinned.clone() })?;
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

/// Reads an OBJ written by [`write_obj`] (or any OBJ restricted to the same
/// subset). A missing sidecar means no pinned nodes. The result passes full
/// mesh validation or the read fails.
pub fn read_obj(path: &Path) -> Result<ClothMesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::DataMissing(format!("{}: {e}", path.display())))?;
    let mut world = Vec::new();
    let mut uv = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let bad = |what: &str| Error::Format(format!("{}:{}: {what}", path.display(), ln + 1));
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    *slot = tok
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("malformed vertex"))?;
                }
                world.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("vt") => {
                let mut c = [0.0; 2];
                for slot in &mut c {
                    *slot = tok
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("malformed texture coordinate"))?;
                }
                uv.push(Vector2::new(c[0], c[1]));
            }
            Some("f") => {
                let mut idx = [0u32; 3];
                for slot in &mut idx {
                    // "a/a" or bare "a"; OBJ indices are 1-based.
                    let field = tok.next().ok_or_else(|| bad("face needs 3 vertices"))?;
                    let first = field.split('/').next().unwrap_or(field);
                    let i: u32 = first.parse().map_err(|_| bad("malformed face index"))?;
                    if i == 0 {
                        return Err(bad("face index 0 (OBJ is 1-based)"));
                    }
                    *slot = i - 1;
                }
                if tok.next().is_some() {
                    return Err(bad("only triangles are supported"));
                }
                faces.push(idx);
            }
            // Comments, object names, etc. are ignored.
            _ => {}
        }
    }
    let pinned = match std::fs::read_to_string(sidecar_path(path)) {
        Ok(s) => serde_json::from_str::<PinnedSidecar>(&s)?.pinned,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    ClothMesh::new(world, uv, faces, pinned)
}
