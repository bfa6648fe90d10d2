//! 8-bit sRGB PNG, used for textures and human-inspectable previews.
//!
//! Images in memory are always linear RGB in [0, 1]; the sRGB transfer
//! curve is applied exactly at the file boundary.

use std::path::Path;

use crate::error::{Error, Result};
use crate::splat::Image;

/// sRGB electro-optical transfer: encoded byte to linear intensity.
pub fn srgb_to_linear(byte: u8) -> f64 {
    let s = byte as f64 / 255.0;
    if s <= 0.04045 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse transfer with clamping: linear intensity to encoded byte.
pub fn linear_to_srgb(linear: f64) -> u8 {
    let c = linear.clamp(0.0, 1.0);
    let s = if c <= 0.003_130_8 { 12.92 * c } else { 1.055 * c.powf(1.0 / 2.4) - 0.055 };
    (s * 255.0).round() as u8
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().map(|&v| linear_to_srgb(v)).collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| Error::InvalidInput("image buffer size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn load_png(path: &Path) -> Result<Image> {
    let file = image::ImageReader::open(path)
        .map_err(|e| Error::DataMissing(format!("{}: {e}", path.display())))?;
    let rgb = file.decode()?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut img = Image::new(w, h);
    for (i, byte) in rgb.as_raw().iter().enumerate() {
        img.data[i] = srgb_to_linear(*byte);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn transfer_curve_fixed_points_and_inverse() {
        assert_eq!(srgb_to_linear(0), 0.0);
        assert_eq!(srgb_to_linear(255), 1.0);
        assert_eq!(linear_to_srgb(0.0), 0);
        assert_eq!(linear_to_srgb(1.0), 255);
        // Every byte survives the round trip exactly.
        for b in 0..=255u8 {
            assert_eq!(linear_to_srgb(srgb_to_linear(b)), b);
        }
        // Out-of-range linear values clamp instead of wrapping.
        assert_eq!(linear_to_srgb(-0.5), 0);
        assert_eq!(linear_to_srgb(2.0), 255);
    }

    #[test]
    fn png_round_trip_is_exact_on_byte_representable_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut img = Image::new(4, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = srgb_to_linear((i * 23 % 256) as u8);
        }
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.width, 4);
        assert_eq!(back.height, 3);
        assert_eq!(back.data, img.data);
    }

    #[test]
    fn quantization_error_is_bounded() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ramp.png");
        let mut img = Image::new(64, 1);
        for x in 0..64 {
            let v = x as f64 / 63.0;
            img.set(x, 0, [v, v * v, 1.0 - v]);
        }
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            // Worst case is half an encoded step through the steepest part
            // of the curve; 1/100 is comfortably above it in linear units.
            assert!((a - b).abs() < 0.01, "{a} vs {b}");
        }
    }
}
