//! Camera files: a JSON array of records with the extrinsics stored as 16
//! row-major reals.

use std::path::Path;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splat::Camera;

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    id: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    world_to_cam: Vec<f64>,
}

pub fn write_cameras(cams: &[Camera], path: &Path) -> Result<()> {
    let records: Vec<CameraRecord> = cams
        .iter()
        .map(|c| CameraRecord {
            id: c.id,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            world_to_cam: c.world_to_cam.transpose().as_slice().to_vec(),
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&records)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads and validates cameras. Every record goes through the same checks
/// as programmatic construction.
pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::DataMissing(format!("{}: {e}", path.display())))?;
    let records: Vec<CameraRecord> = serde_json::from_str(&text)?;
    records
        .into_iter()
        .map(|r| {
            if r.world_to_cam.len() != 16 {
                return Err(Error::InvalidCamera(format!(
                    "camera {}: world_to_cam has {} entries, need 16",
                    r.id,
                    r.world_to_cam.len()
                )));
            }
            Camera::new(
                r.id,
                r.fx,
                r.fy,
                r.cx,
                r.cy,
                r.width,
                r.height,
                Matrix4::from_row_slice(&r.world_to_cam),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use tempfile::tempdir;

    #[test]
    fn round_trip_preserves_projection() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cameras.json");
        let cams = vec![
            Camera::look_at(
                0,
                Vector3::new(2.0, 0.3, -1.0),
                Vector3::new(0.0, 0.0, 0.5),
                Vector3::y(),
                80.0,
                64,
                48,
            )
            .unwrap(),
            Camera::look_at(
                7,
                Vector3::new(-1.0, 1.0, 2.0),
                Vector3::new(0.0, 0.0, 0.5),
                Vector3::y(),
                80.0,
                64,
                48,
            )
            .unwrap(),
        ];
        write_cameras(&cams, &path).unwrap();
        let back = read_cameras(&path).unwrap();
        assert_eq!(back.len(), 2);
        let probe = Vector3::new(0.1, -0.2, 0.4);
        for (a, b) in cams.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.world_to_cam, b.world_to_cam);
            let pa = a.project_point(&probe).unwrap();
            let pb = b.project_point(&probe).unwrap();
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn row_major_layout_in_the_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.json");
        let cam = Camera::look_at(
            3,
            Vector3::new(0.0, 0.0, -2.0),
            Vector3::zeros(),
            Vector3::y(),
            50.0,
            32,
            32,
        )
        .unwrap();
        write_cameras(&[cam.clone()], &path).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let flat = json[0]["world_to_cam"].as_array().unwrap();
        // Element [row 0][col 3] of the matrix sits at flat index 3.
        assert_eq!(flat[3].as_f64().unwrap(), cam.world_to_cam[(0, 3)]);
        assert_eq!(flat[12].as_f64().unwrap(), 0.0);
        assert_eq!(flat[15].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn invalid_matrix_is_rejected_on_read() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"[{"id":0,"fx":50.0,"fy":50.0,"cx":16.0,"cy":16.0,"width":32,"height":32,
                "world_to_cam":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,2]}]"#,
        )
        .unwrap();
        assert!(matches!(read_cameras(&path), Err(Error::InvalidCamera(_))));
    }
}
