//! Portable float map images, the loss-bearing frame format.
//!
//! Color PFM: the ASCII header `PF\n<width> <height>\n<scale>\n` followed by
//! `width*height*3` f32 samples, rows stored bottom-up. A negative scale
//! marks little-endian data; we always write `-1.0` and can read either
//! byte order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::splat::Image;

pub fn write_pfm(img: &Image, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(32 + img.data.len() * 4);
    bytes.extend_from_slice(format!("PF\n{} {}\n-1.0\n", img.width, img.height).as_bytes());
    for y in (0..img.height).rev() {
        let row = img.idx(0, y);
        for v in &img.data[row..row + img.width * 3] {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::DataMissing(format!("{}: {e}", path.display())))?;
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));

    // Header: three whitespace-delimited tokens, each followed by a single
    // whitespace byte.
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos == start || pos >= bytes.len() {
            return Err(bad("truncated header"));
        }
        let tok = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1; // consume the delimiter
        Ok(tok)
    };
    if token(&bytes)? != "PF" {
        return Err(bad("not a color PFM (expected magic PF)"));
    }
    let width: usize = token(&bytes)?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token(&bytes)?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = token(&bytes)?.parse().map_err(|_| bad("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    let n = width * height * 3;
    let data = &bytes[pos..];
    if data.len() != n * 4 {
        return Err(bad(&format!("expected {} payload bytes, found {}", n * 4, data.len())));
    }
    let little = scale < 0.0;
    let mut img = Image::new(width, height);
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        // File row 0 is the bottom image row.
        let file_row = i / (width * 3);
        let within = i % (width * 3);
        let y = height - 1 - file_row;
        img.data[y * width * 3 + within] = v as f64;
    }
    Ok(img)
}
