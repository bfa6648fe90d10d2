//! Trajectory binaries: magic `CTRJ`, u32 version, u32 T, u32 K, then
//! T*K*3 little-endian f64 positions in step-major, node-major, xyz order.
//!
//! The step length `dt` is run metadata and travels in the manifest, not in
//! the binary, so the file layout stays exactly the documented array.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::synth::Trajectory;

const MAGIC: &[u8; 4] = b"CTRJ";
const VERSION: u32 = 1;

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    traj.validate()?;
    let t = traj.len() as u32;
    let k = traj.num_nodes() as u32;
    let mut bytes = Vec::with_capacity(16 + traj.len() * traj.num_nodes() * 24);
    bytes.extend_from_slice(MAGIC);
    for v in [VERSION, t, k] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for frame in &traj.positions {
        for p in frame {
            for c in [p.x, p.y, p.z] {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads a trajectory binary. `dt` comes from the caller (normally the run
/// manifest) because the file format does not carry it.
pub fn read_trajectory(path: &Path, dt: f64) -> Result<Trajectory> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::DataMissing(format!("{}: {e}", path.display())))?;
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    if bytes.len() < 16 {
        return Err(bad("too short for a CTRJ header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic (expected CTRJ)"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    if word(4) != VERSION {
        return Err(bad(&format!("unsupported version {}", word(4))));
    }
    let t = word(8) as usize;
    let k = word(12) as usize;
    let expected = 16 + t * k * 24;
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut coords = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let positions = (0..t)
        .map(|_| {
            (0..k)
                .map(|_| {
                    let x = coords.next().expect("length checked");
                    let y = coords.next().expect("length checked");
                    let z = coords.next().expect("length checked");
                    Vector3::new(x, y, z)
                })
                .collect()
        })
        .collect();
    let traj = Trajectory::new(positions, dt);
    traj.validate()?;
    Ok(traj)
}
