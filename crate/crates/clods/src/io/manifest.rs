//! The run manifest: one JSON file per dataset/run directory that names
//! every artifact and records which pipeline stages have completed.
//!
//! All paths inside the manifest are relative to the directory containing
//! the manifest file itself, so a run directory can be moved or copied
//! wholesale. Stages append themselves to `completed` when they finish;
//! resumable invocations consult that list and skip finished work.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::StageConfig;

pub const STAGE_SYNTH: &str = "synth";
pub const STAGE_FIT: &str = "fit";
pub const STAGE_EXTRACT: &str = "extract";
pub const STAGE_TRAIN: &str = "train";
pub const STAGE_ROLLOUT: &str = "rollout";
pub const STAGE_EVAL: &str = "eval";

/// Pipeline order; earlier stages are prerequisites of later ones.
pub const STAGES: [&str; 6] =
    [STAGE_SYNTH, STAGE_FIT, STAGE_EXTRACT, STAGE_TRAIN, STAGE_ROLLOUT, STAGE_EVAL];

const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Master seed; stages derive their own streams from it.
    pub seed: u64,
    /// Ground-truth trajectory length T (frames 0..T-1 exist on disk).
    pub steps: usize,
    /// Simulation step length in seconds (descriptive metadata).
    pub dt: f64,
    /// Views present under `frames_dir`, in file order.
    pub camera_ids: Vec<u32>,
    pub mesh: PathBuf,
    pub cameras: PathBuf,
    pub frames_dir: PathBuf,
    pub trajectory: PathBuf,
    pub texture: Option<PathBuf>,
    pub splat_checkpoint: PathBuf,
    pub gnn_checkpoint: PathBuf,
    pub extracted_trajectory: PathBuf,
    /// Per-timestep extraction diagnostics CSV.
    pub extraction_log: PathBuf,
    /// Per-epoch dynamics training CSV.
    pub training_log: PathBuf,
    /// Rollout outputs (trajectory + rendered frames) land here.
    pub rollout_dir: PathBuf,
    /// Evaluation CSV + summary JSON land here.
    pub eval_dir: PathBuf,
    pub stages: StageConfig,
    /// Names from [`STAGES`] that have finished, in completion order.
    pub completed: Vec<String>,
}

impl Manifest {
    /// A manifest with the conventional relative layout for a fresh run.
    pub fn with_layout(seed: u64, steps: usize, dt: f64, camera_ids: Vec<u32>, stages: StageConfig) -> Self {
        Self {
            version: MANIFEST_VERSION,
            seed,
            steps,
            dt,
            camera_ids,
            mesh: "mesh.obj".into(),
            cameras: "cameras.json".into(),
            frames_dir: "frames".into(),
            trajectory: "trajectory.ctrj".into(),
            texture: Some("texture.png".into()),
            splat_checkpoint: "checkpoints/splat.smgs".into(),
            gnn_checkpoint: "checkpoints/gnn.cdgn".into(),
            extracted_trajectory: "extracted.ctrj".into(),
            extraction_log: "logs/extraction.csv".into(),
            training_log: "logs/training.csv".into(),
            rollout_dir: "rollout".into(),
            eval_dir: "eval".into(),
            stages,
            completed: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ManifestError(format!("{}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::ManifestError(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::ManifestError(format!(
                "manifest version {} (this build reads {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.steps == 0 {
            return Err(Error::ManifestError("steps must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::ManifestError(format!("dt = {}", self.dt)));
        }
        if self.camera_ids.is_empty() {
            return Err(Error::ManifestError("no cameras".into()));
        }
        let mut ids = self.camera_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.camera_ids.len() {
            return Err(Error::ManifestError("duplicate camera ids".into()));
        }
        for s in &self.completed {
            if !STAGES.contains(&s.as_str()) {
                return Err(Error::ManifestError(format!("unknown completed stage {s:?}")));
            }
        }
        self.stages.validate()?;
        Ok(())
    }

    pub fn is_complete(&self, stage: &str) -> bool {
        self.completed.iter().any(|s| s == stage)
    }

    /// Records a finished stage (idempotent).
    pub fn mark_complete(&mut self, stage: &str) {
        assert!(STAGES.contains(&stage), "unknown stage {stage:?}");
        if !self.is_complete(stage) {
            self.completed.push(stage.to_owned());
        }
    }

    /// Errors unless every stage before `stage` in pipeline order has
    /// completed.
    pub fn require_predecessors(&self, stage: &str) -> Result<()> {
        for s in STAGES.iter().take_while(|s| **s != stage) {
            if !self.is_complete(s) {
                return Err(Error::StageOrder(format!("{stage} needs {s} to run first")));
            }
        }
        Ok(())
    }
}

/// Resolves a manifest-relative path against the manifest's directory.
pub fn resolve(manifest_dir: &Path, rel: &Path) -> PathBuf {
    if rel.is_absolute() {
        rel.to_path_buf()
    } else {
        manifest_dir.join(rel)
    }
}

/// `frames_dir/view{ID}/t{STEP}.pfm`
pub fn frame_path(frames_dir: &Path, view: u32, step: usize) -> PathBuf {
    frames_dir.join(format!("view{view}")).join(format!("t{step}.pfm"))
}

/// PNG preview next to the PFM.
pub fn frame_png_path(frames_dir: &Path, view: u32, step: usize) -> PathBuf {
    frames_dir.join(format!("view{view}")).join(format!("t{step}.png"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn fresh() -> Manifest {
        Manifest::with_layout(7, 50, 0.02, vec![0, 1, 2], StageConfig::default())
    }

    #[test]
    fn save_load_save_is_lossless() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("manifest.json");
        let p2 = dir.path().join("again.json");
        let mut m = fresh();
        m.mark_complete(STAGE_SYNTH);
        m.save(&p1).unwrap();
        let loaded = Manifest::load(&p1).unwrap();
        assert_eq!(loaded, m);
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn stage_markers_and_ordering() {
        let mut m = fresh();
        assert!(!m.is_complete(STAGE_FIT));
        assert!(m.require_predecessors(STAGE_SYNTH).is_ok(), "first stage has no prerequisites");
        assert!(matches!(m.require_predecessors(STAGE_EXTRACT), Err(Error::StageOrder(_))));
        m.mark_complete(STAGE_SYNTH);
        m.mark_complete(STAGE_FIT);
        m.mark_complete(STAGE_FIT); // idempotent
        assert_eq!(m.completed, vec![STAGE_SYNTH, STAGE_FIT]);
        assert!(m.require_predecessors(STAGE_EXTRACT).is_ok());
        assert!(matches!(m.require_predecessors(STAGE_ROLLOUT), Err(Error::StageOrder(_))));
    }

    #[test]
    fn validation_rejects_bad_manifests() {
        let mut m = fresh();
        m.steps = 0;
        assert!(matches!(m.validate(), Err(Error::ManifestError(_))));
        let mut m = fresh();
        m.camera_ids = vec![1, 1];
        assert!(matches!(m.validate(), Err(Error::ManifestError(_))));
        let mut m = fresh();
        m.version = 99;
        assert!(matches!(m.validate(), Err(Error::ManifestError(_))));
        let mut m = fresh();
        m.completed.push("paint".into());
        assert!(matches!(m.validate(), Err(Error::ManifestError(_))));
    }

    #[test]
    fn frame_paths_follow_the_layout() {
        let base = Path::new("frames");
        assert_eq!(frame_path(base, 3, 12), Path::new("frames/view3/t12.pfm"));
        assert_eq!(frame_png_path(base, 0, 0), Path::new("frames/view0/t0.png"));
        let dir = Path::new("/runs/a");
        assert_eq!(resolve(dir, Path::new("mesh.obj")), Path::new("/runs/a/mesh.obj"));
        assert_eq!(resolve(dir, Path::new("/abs/x.obj")), Path::new("/abs/x.obj"));
    }
}
