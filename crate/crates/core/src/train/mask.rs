use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ensure;
use crate::{Result, Slice};

pub const DEFAULT_MASK_PATCH: usize = 8;
pub const DEFAULT_MASK_RATIO: f64 = 0.75;

/// Which image patches are hidden during masked pretraining.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub patch_size: usize,
    pub mask_ratio: f64,
    pub seed: u64,
    pub grid_h: usize,
    pub grid_w: usize,
    /// Row-major over patches, `true` = masked.
    pub mask: Vec<bool>,
}

impl MaskSpec {
    pub fn n_masked(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_masked_pixel(&self, i: usize, j: usize) -> bool {
        self.mask[(i / self.patch_size) * self.grid_w + j / self.patch_size]
    }
}

/// Masks exactly `round(ratio * n_patches)` patches chosen uniformly without
/// replacement.
pub fn make_mask(image_size: (usize, usize), patch_size: usize, mask_ratio: f64, seed: u64) -> Result<MaskSpec> {
    let (h, w) = image_size;
    ensure!(patch_size > 0, InvalidArgument, "patch size must be positive");
    ensure!(
        h % patch_size == 0 && w % patch_size == 0,
        Shape,
        "{h}x{w} image not divisible by patch {patch_size}"
    );
    ensure!((0.0..=1.0).contains(&mask_ratio), InvalidArgument, "mask ratio {mask_ratio} outside [0, 1]");
    let (gh, gw) = (h / patch_size, w / patch_size);
    let n = gh * gw;
    let k = (mask_ratio * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n];
    for i in sample(&mut rng, n, k) {
        mask[i] = true;
    }
    Ok(MaskSpec {
        patch_size,
        mask_ratio,
        seed,
        grid_h: gh,
        grid_w: gw,
        mask,
    })
}

/// Zero-fills masked patches; other pixels are copied unchanged.
pub fn apply_mask(x: &Slice, mask: &MaskSpec) -> Result<Slice> {
    ensure!(
        x.dim() == (mask.grid_h * mask.patch_size, mask.grid_w * mask.patch_size),
        Shape,
        "image {:?} does not match a {}x{} mask of patch {}",
        x.dim(),
        mask.grid_h,
        mask.grid_w,
        mask.patch_size
    );
    let mut out = x.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        if mask.is_masked_pixel(i, j) {
            *v = 0.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_setting_masks_48_of_64() {
        let m = make_mask((64, 64), 8, 0.75, 0).unwrap();
        assert_eq!((m.grid_h, m.grid_w), (8, 8));
        assert_eq!(m.n_masked(), 48);
    }

    #[test]
    fn zero_ratio_is_identity() {
        let m = make_mask((16, 16), 8, 0.0, 3).unwrap();
        let x = Slice::from_shape_fn((16, 16), |(i, j)| (i * j) as f64);
        assert_eq!(apply_mask(&x, &m).unwrap(), x);
    }

    #[test]
    fn full_ratio_fills_everything() {
        let m = make_mask((16, 16), 8, 1.0, 3).unwrap();
        let x = Slice::from_elem((16, 16), 0.7);
        assert!(apply_mask(&x, &m).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeds_control_the_draw() {
        let a = make_mask((64, 64), 8, 0.75, 1).unwrap();
        assert_eq!(a, make_mask((64, 64), 8, 0.75, 1).unwrap());
        assert_ne!(a.mask, make_mask((64, 64), 8, 0.75, 2).unwrap().mask);
    }

    #[test]
    fn masked_mean_matches_direct_count() {
        let x = Slice::from_shape_fn((64, 64), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let m = make_mask((64, 64), 8, 0.75, 9).unwrap();
        let y = apply_mask(&x, &m).unwrap();
        let mut kept = 0.0;
        for ((i, j), v) in x.indexed_iter() {
            if !m.is_masked_pixel(i, j) {
                kept += v;
            }
        }
        assert!((y.sum() - kept).abs() < 1e-9);
        // a quarter of the patches survive, so the mean drops to roughly a quarter
        let ratio = y.mean().unwrap() / x.mean().unwrap();
        assert!((ratio - 0.25).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn indivisible_size_rejected() {
        assert!(make_mask((60, 64), 8, 0.75, 0).is_err());
    }
}
