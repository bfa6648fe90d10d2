//! Crate-wide error type.
//!
//! One enum covers every module so that pipeline stages can bubble errors
//! without wrapper layers. Variants carry enough context to diagnose a
//! failure from a log line alone.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A face whose area is below the degeneracy threshold for its mesh.
    #[error("face {face} is degenerate (area {area:.3e})")]
    DegenerateFace { face: usize, area: f64 },

    /// Mesh fails a structural check (bad indices, UV out of range, ...).
    #[error("unsupported mesh: {0}")]
    UnsupportedMesh(String),

    /// Camera intrinsics or extrinsics fail validation.
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    /// A splat mean sits behind the camera's near plane. Used internally to
    /// cull components; it never escapes a render call.
    #[error("gaussian mean behind camera")]
    BehindCamera,

    /// A projected 2D covariance is singular or non-finite.
    #[error("degenerate 2d covariance for component {component}")]
    DegenerateCovariance { component: usize },

    /// Two containers that must agree in shape do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A render tape disagrees with the scene or image it is applied to.
    #[error("tape mismatch: {0}")]
    TapeMismatch(String),

    /// An argument is outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Graph tensors disagree with the mesh they were built from.
    #[error("graph mismatch: {0}")]
    GraphMismatch(String),

    /// A rollout escaped the plausible region of state space.
    #[error("numeric blowup at rollout step {step}")]
    NumericBlowup { step: usize },

    /// Not enough data to run an operation (e.g. training windows).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The mass-spring integrator is unstable under the given parameters.
    #[error("unstable simulation: {0}")]
    UnstableSim(String),

    /// Simulation parameters are out of their documented domain.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A pipeline stage was invoked before its prerequisites completed.
    #[error("stage order violation: {0}")]
    StageOrder(String),

    /// The run manifest is missing, malformed, or inconsistent.
    #[error("manifest error: {0}")]
    ManifestError(String),

    /// A file referenced by the manifest does not exist.
    #[error("data missing: {0}")]
    DataMissing(String),

    /// A binary or text artifact failed to parse.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}
