use std::path::Path;

use image::{GrayImage, Luma};

use crate::{LomaeError, Result, Slice};

/// Writes an 8-bit grayscale PNG, mapping `[low, high]` to `[0, 255]`.
pub fn save_png(path: &Path, slice: &Slice, low: f64, high: f64) -> Result<()> {
    if !(high > low) {
        return Err(LomaeError::InvalidArgument(format!("render window [{low}, {high}] is empty")));
    }
    let (h, w) = slice.dim();
    let mut img = GrayImage::new(w as u32, h as u32);
    for ((i, j), &v) in slice.indexed_iter() {
        let t = ((v - low) / (high - low)).clamp(0.0, 1.0);
        img.put_pixel(j as u32, i as u32, Luma([(t * 255.0).round() as u8]));
    }
    img.save(path)?;
    Ok(())
}

/// Renders with the slice's own min/max as the window.
pub fn save_png_auto(path: &Path, slice: &Slice) -> Result<()> {
    let lo = slice.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    save_png(path, slice, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_decodable_png() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let s = Slice::from_shape_fn((4, 6), |(i, j)| (i + j) as f64);
        save_png_auto(&p, &s).unwrap();
        let img = image::open(&p).unwrap().to_luma8();
        assert_eq!(img.dimensions(), (6, 4));
        assert_eq!(img.get_pixel(0, 0)[0], 0);
        assert_eq!(img.get_pixel(5, 3)[0], 255);
        assert!(save_png(&p, &s, 1.0, 1.0).is_err());
    }
}
