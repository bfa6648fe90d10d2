//! One-call dataset builder: simulate, render, and lay out a run directory.
//!
//! `dataset_build` is the write-side counterpart of the manifest loader.
//! It owns the directory layout so the training pipeline never has to
//! guess where anything lives, and it writes everything from one thread
//! in manifest order, so a same-seed rerun is byte-identical file by file.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::io::{
    frame_path, frame_png_path, load_png, resolve, save_png, write_cameras, write_obj,
    write_pfm, write_trajectory, Manifest, STAGE_SYNTH,
};
use crate::pipeline::StageConfig;
use crate::splat::Image;
use crate::synth::{make_camera_ring, render_ground_truth, simulate_cloth, RingParams, SimParams};

/// Texture used when the caller does not supply one: enough cells that
/// neighboring faces see different colors, which multi-view fitting needs
/// to lock UV-space appearance in place.
fn default_texture() -> Image {
    crate::synth::checkerboard(64, 8, [0.87, 0.82, 0.72], [0.16, 0.2, 0.4])
}

/// Simulates a flag, renders it from a camera ring, and writes the full
/// run directory: `mesh.obj` (+ pinned sidecar), `trajectory.ctrj`,
/// `cameras.json`, `texture.png`, per-view PFM/PNG frames, and
/// `manifest.json` with the synthesis stage marked complete.
///
/// `texture` is an optional path to a PNG to use instead of the built-in
/// checkerboard; it is copied into the run directory, and frames are
/// rendered from the stored copy so the directory is self-consistent.
/// `light` enables diffuse shading from that direction.
pub fn dataset_build(
    sim: &SimParams,
    ring: &RingParams,
    texture: Option<&Path>,
    light: Option<Vector3<f64>>,
    out_dir: &Path,
) -> Result<Manifest> {
    sim.validate()?;
    let (mesh, traj) = simulate_cloth(sim)?;
    let cams = make_camera_ring(ring)?;

    std::fs::create_dir_all(out_dir)?;
    let stages = StageConfig { seed: sim.seed, ..StageConfig::default() };
    let mut manifest = Manifest::with_layout(
        sim.seed,
        sim.steps,
        sim.dt,
        cams.iter().map(|c| c.id).collect(),
        stages,
    );

    write_obj(&mesh, &resolve(out_dir, &manifest.mesh))?;
    write_trajectory(&traj, &resolve(out_dir, &manifest.trajectory))?;
    write_cameras(&cams, &resolve(out_dir, &manifest.cameras))?;

    // Store the texture first, then render from the stored copy, so the
    // frames match what a later stage will load (including sRGB
    // quantization when we had to encode the built-in checkerboard).
    let tex_path = resolve(out_dir, manifest.texture.as_ref().expect("layout has a texture"));
    match texture {
        Some(src) => {
            load_png(src)?; // reject files that will not decode later
            std::fs::copy(src, &tex_path)?;
        }
        None => save_png(&default_texture(), &tex_path)?,
    }
    let tex = load_png(&tex_path)?;

    let frames = render_ground_truth(&traj, &mesh, &cams, &tex, light)?;
    let frames_dir = resolve(out_dir, &manifest.frames_dir);
    for cam in &cams {
        std::fs::create_dir_all(frames_dir.join(format!("view{}", cam.id)))?;
    }
    for fs in &frames {
        for (img, &view) in fs.images.iter().zip(&fs.camera_ids) {
            write_pfm(img, &frame_path(&frames_dir, view, fs.timestep))?;
            save_png(img, &frame_png_path(&frames_dir, view, fs.timestep))?;
        }
    }

    manifest.mark_complete(STAGE_SYNTH);
    manifest.save(&resolve(out_dir, Path::new("manifest.json")))?;
    Ok(manifest)
}

/// Loads the ground-truth inputs a later stage needs from a run
/// directory: rest mesh, trajectory, cameras, and texture.
pub fn dataset_load(
    manifest_dir: &Path,
    manifest: &Manifest,
) -> Result<(crate::geometry::ClothMesh, crate::synth::Trajectory, Vec<crate::splat::Camera>, Image)> {
    manifest
        .is_complete(STAGE_SYNTH)
        .then_some(())
        .ok_or_else(|| Error::DataMissing("run directory has no synthesized data".into()))?;
    let mesh = crate::io::read_obj(&resolve(manifest_dir, &manifest.mesh))?;
    let traj = crate::io::read_trajectory(&resolve(manifest_dir, &manifest.trajectory), manifest.dt)?;
    let cams = crate::io::read_cameras(&resolve(manifest_dir, &manifest.cameras))?;
    let tex_rel = manifest
        .texture
        .as_ref()
        .ok_or_else(|| Error::DataMissing("manifest lists no texture".into()))?;
    let tex = load_png(&resolve(manifest_dir, tex_rel))?;
    if traj.num_nodes() != mesh.world_pos.len() {
        return Err(Error::DataMissing(format!(
            "trajectory has {} nodes but mesh has {}",
            traj.num_nodes(),
            mesh.world_pos.len()
        )));
    }
    Ok((mesh, traj, cams, tex))
}

/// Loads the stored multi-view frames for one timestep, in camera order.
pub fn load_frame_set(manifest_dir: &Path, manifest: &Manifest, step: usize) -> Result<Vec<Image>> {
    let frames_dir = resolve(manifest_dir, &manifest.frames_dir);
    manifest
        .camera_ids
        .iter()
        .map(|&view| crate::io::read_pfm(&frame_path(&frames_dir, view, step)))
        .collect()
}
