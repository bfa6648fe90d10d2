//! Flat binary checkpoints.
//!
//! Splat checkpoint (`SMGS`), all integers u32 LE, all reals f64 LE:
//!
//! ```text
//! magic "SMGS" | version=1
//! n_anchors | sh_degree | epsilon
//! per anchor: face | beta0 beta1 beta2
//! n_colors  | colors...
//! n_scale   | scale_mult...
//! octaves | hidden | use_world | use_mesh | n_params | params...
//! ```
//!
//! Dynamics checkpoint (`CDGN`), same conventions, arrays length-prefixed:
//!
//! ```text
//! magic "CDGN" | version=1
//! width | blocks
//! n_theta | theta...
//! node mean... | node std...
//! edge mean... | edge std...
//! accel mean... | accel std...
//! ```

use std::path::Path;

use nalgebra::Vector3;

use crate::dynamics::{GnnParams, NormStats, Normalizer, ACCEL_DIM, EDGE_FEATS, NODE_FEATS};
use crate::error::{Error, Result};
use crate::splat::{Anchor, GaussianCloth, OpacityNet};

const SMGS_MAGIC: &[u8; 4] = b"SMGS";
const SMGS_VERSION: u32 = 1;

const CDGN_MAGIC: &[u8; 4] = b"CDGN";
const CDGN_VERSION: u32 = 1;

/// Little-endian append helpers shared by the binary checkpoint writers.
pub(crate) struct BinWriter(pub Vec<u8>);

impl BinWriter {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = Self(Vec::new());
        w.0.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.u32(vs.len() as u32);
        for v in vs {
            self.f64(*v);
        }
    }
}

/// Little-endian sequential reader with context-carrying errors.
pub(crate) struct BinReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: String,
}

impl<'a> BinReader<'a> {
    pub fn new(bytes: &'a [u8], path: &Path, magic: &[u8; 4], version: u32) -> Result<Self> {
        let mut r = Self { bytes, pos: 0, name: path.display().to_string() };
        let got = r.take(4)?;
        if got != magic {
            return Err(r.bad(&format!("bad magic (expected {:?})", String::from_utf8_lossy(magic))));
        }
        let v = r.u32()?;
        if v != version {
            return Err(r.bad(&format!("unsupported version {v}")));
        }
        Ok(r)
    }

    pub fn bad(&self, what: &str) -> Error {
        Error::Format(format!("{}: {what}", self.name))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.bad("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Length-prefixed f64 array with a sanity cap so corrupt counts fail
    /// cleanly instead of attempting a giant allocation.
    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        if self.pos + n * 8 > self.bytes.len() {
            return Err(self.bad(&format!("array of {n} reals exceeds file size")));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.bad(&format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn write_splat_checkpoint(
    cloth: &GaussianCloth,
    net: &OpacityNet,
    path: &Path,
) -> Result<()> {
    let mut w = BinWriter::new(SMGS_MAGIC, SMGS_VERSION);
    w.u32(cloth.anchors.len() as u32);
    w.u32(cloth.sh_degree as u32);
    w.f64(cloth.epsilon);
    for a in &cloth.anchors {
        w.u32(a.face);
        for c in [a.beta.x, a.beta.y, a.beta.z] {
            w.f64(c);
        }
    }
    w.f64s(&cloth.colors);
    w.f64s(&cloth.scale_mult);
    w.u32(net.octaves as u32);
    w.u32(net.hidden as u32);
    w.u32(net.use_world as u32);
    w.u32(net.use_mesh as u32);
    w.f64s(&net.params);
    std::fs::write(path, w.0)?;
    Ok(())
}

pub fn read_splat_checkpoint(path: &Path) -> Result<(GaussianCloth, OpacityNet)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::DataMissing(format!("{}: {e}", path.display())))?;
    let mut r = BinReader::new(&bytes, path, SMGS_MAGIC, SMGS_VERSION)?;
    let n_anchors = r.u32()? as usize;
    let sh_degree = r.u32()?;
    if sh_degree > 3 {
        return Err(r.bad(&format!("sh_degree {sh_degree} out of range")));
    }
    let epsilon = r.f64()?;
    let anchors = (0..n_anchors)
        .map(|_| {
            let face = r.u32()?;
            let beta = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
            Ok(Anchor { face, beta })
        })
        .collect::<Result<Vec<_>>>()?;
    let colors = r.f64s()?;
    let scale_mult = r.f64s()?;
    let cloth = GaussianCloth {
        anchors,
        sh_degree: sh_degree as u8,
        colors,
        scale_mult,
        epsilon,
    };
    let n_coeffs = cloth.num_coeffs();
    if cloth.colors.len() != n_anchors * 3 * n_coeffs {
        return Err(r.bad(&format!(
            "{} colors for {n_anchors} components at degree {sh_degree}",
            cloth.colors.len()
        )));
    }
    if cloth.scale_mult.len() != n_anchors {
        return Err(r.bad(&format!("{} scale multipliers for {n_anchors} components", cloth.scale_mult.len())));
    }
    let octaves = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let use_world = r.u32()? != 0;
    let use_mesh = r.u32()? != 0;
    let params = r.f64s()?;
    r.finish()?;
    let mut net = OpacityNet::new(hidden, octaves, use_world, use_mesh, 0)?;
    if params.len() != net.n_params() {
        return Err(Error::Format(format!(
            "{}: {} net params, layout needs {}",
            path.display(),
            params.len(),
            net.n_params()
        )));
    }
    net.params = params;
    Ok((cloth, net))
}

/// Writes trained dynamics weights plus the frozen normalizer statistics
/// they were trained under. Refuses mid-training normalizers: loading
/// stats that were still accumulating would silently shift every
/// prediction.
pub fn write_gnn_checkpoint(params: &GnnParams, path: &Path) -> Result<()> {
    params.validate()?;
    if !params.norm.frozen() {
        return Err(Error::InvalidInput(
            "normalizer statistics are still accumulating; freeze them before checkpointing"
                .into(),
        ));
    }
    let mut w = BinWriter::new(CDGN_MAGIC, CDGN_VERSION);
    w.u32(params.width as u32);
    w.u32(params.blocks as u32);
    w.f64s(&params.theta);
    for n in [&params.norm.node, &params.norm.edge, &params.norm.accel] {
        w.f64s(&n.mean);
        w.f64s(&n.std);
    }
    std::fs::write(path, w.0)?;
    Ok(())
}

pub fn read_gnn_checkpoint(path: &Path) -> Result<GnnParams> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::DataMissing(format!("{}: {e}", path.display())))?;
    let mut r = BinReader::new(&bytes, path, CDGN_MAGIC, CDGN_VERSION)?;
    let width = r.u32()? as usize;
    let blocks = r.u32()? as usize;
    if width == 0 || blocks == 0 {
        return Err(r.bad(&format!("degenerate {width}x{blocks} network shape")));
    }
    let theta = r.f64s()?;
    let mut norms = Vec::with_capacity(3);
    for (what, dim) in [("node", NODE_FEATS), ("edge", EDGE_FEATS), ("accel", ACCEL_DIM)] {
        let mean = r.f64s()?;
        let std = r.f64s()?;
        if mean.len() != dim {
            return Err(r.bad(&format!("{what} normalizer has dim {}, expected {dim}", mean.len())));
        }
        norms.push(Normalizer::from_stats(mean, std).map_err(|e| r.bad(&e.to_string()))?);
    }
    r.finish()?;
    let accel = norms.pop().expect("three normalizers");
    let edge = norms.pop().expect("three normalizers");
    let node = norms.pop().expect("three normalizers");
    let params = GnnParams { width, blocks, theta, norm: NormStats { node, edge, accel } };
    params.validate().map_err(|e| r.bad(&e.to_string()))?;
    Ok(params)
}
