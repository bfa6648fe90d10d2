//! File formats: everything the pipeline reads or writes.
//!
//! | What | Format |
//! |------|--------|
//! | Meshes | Wavefront OBJ (`v`/`vt`/`f a/a b/b c/c`) + `{"pinned":[..]}` sidecar |
//! | Float images | PFM, color, little-endian, bottom-up rows |
//! | Preview images | 8-bit sRGB PNG |
//! | Trajectories | `CTRJ` flat binary (header + f64 LE positions) |
//! | Cameras | JSON array of intrinsics + row-major `world_to_cam` |
//! | Splat checkpoint | `SMGS` flat binary (anchors, colors, opacity net) |
//! | Dynamics checkpoint | `CDGN` flat binary (shapes, params, normalizers) |
//! | Metrics/logs | plain CSV with a fixed header row |
//! | Run manifest | JSON, ties all of the above together |
//!
//! Text floats are written with Rust's shortest round-trip formatting and
//! binary floats as little-endian f64 (f32 for PFM), so writes are
//! deterministic: the same data produces byte-identical files on any
//! platform.

mod cameras;
mod checkpoint;
mod csv;
mod manifest;
mod obj;
mod pfm;
mod png;
mod traj;

pub use cameras::{read_cameras, write_cameras};
pub use checkpoint::{
    read_gnn_checkpoint, read_splat_checkpoint, write_gnn_checkpoint, write_splat_checkpoint,
};
pub use csv::{read_csv, write_csv};
pub use manifest::{
    frame_path, frame_png_path, resolve, Manifest, STAGES, STAGE_EVAL, STAGE_EXTRACT, STAGE_FIT,
    STAGE_ROLLOUT, STAGE_SYNTH, STAGE_TRAIN,
};
pub use obj::{read_obj, write_obj};
pub use pfm::{read_pfm, write_pfm};
pub use png::{linear_to_srgb, load_png, save_png, srgb_to_linear};
pub use traj::{read_trajectory, write_trajectory};
