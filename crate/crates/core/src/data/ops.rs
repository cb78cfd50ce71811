use std::str::FromStr;

use crate::error::ensure;
use crate::{LomaeError, Result, Slice};

pub const DEFAULT_TRAIN_WINDOW_HU: (f64, f64) = (-1000.0, 2000.0);
pub const DISPLAY_WINDOW_HU: (f64, f64) = (-160.0, 240.0);

/// Affine map of `[low, high]` onto `[0, 1]`, clipped outside.
pub fn normalize_window(slice: &Slice, window: (f64, f64)) -> Result<Slice> {
    let (lo, hi) = window;
    ensure!(lo.is_finite() && hi.is_finite() && lo < hi, InvalidArgument, "degenerate window [{lo}, {hi}]");
    Ok(slice.mapv(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)))
}

/// Row-stochastic `target x source` matrix of interval overlaps.
fn area_weights(source: usize, target: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = source as f64 / target as f64;
    (0..target)
        .map(|o| {
            let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut row = Vec::new();
            let mut s = a.floor() as usize;
            while (s as f64) < b && s < source {
                let overlap = (b.min((s + 1) as f64) - a.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    row.push((s, overlap / scale));
                }
                s += 1;
            }
            row
        })
        .collect()
}

/// Area-weighted downsampling to `target x target`.
pub fn resize_area(slice: &Slice, target: usize) -> Result<Slice> {
    let (h, w) = slice.dim();
    ensure!(h == w, Shape, "resize expects a square slice, got {h}x{w}");
    ensure!(target > 0, InvalidArgument, "target size must be positive");
    ensure!(target <= h, InvalidArgument, "upscaling {h} -> {target} is not supported");
    if target == h {
        return Ok(slice.clone());
    }
    let wts = area_weights(h, target);
    let mut tmp = Slice::zeros((h, target));
    for i in 0..h {
        for (o, row) in wts.iter().enumerate() {
            tmp[[i, o]] = row.iter().map(|&(s, wt)| wt * slice[[i, s]]).sum();
        }
    }
    let mut out = Slice::zeros((target, target));
    for (o, row) in wts.iter().enumerate() {
        for j in 0..target {
            out[[o, j]] = row.iter().map(|&(s, wt)| wt * tmp[[s, j]]).sum();
        }
    }
    Ok(out)
}

/// Rotations and flips of the square (a subset of its symmetry group).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentOp {
    None,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 6] = [
        AugmentOp::None,
        AugmentOp::Rot90,
        AugmentOp::Rot180,
        AugmentOp::Rot270,
        AugmentOp::FlipH,
        AugmentOp::FlipV,
    ];

    pub fn inverse(self) -> Self {
        match self {
            AugmentOp::Rot90 => AugmentOp::Rot270,
            AugmentOp::Rot270 => AugmentOp::Rot90,
            other => other,
        }
    }

    /// Applies the op to a square slice.
    pub fn apply(self, x: &Slice) -> Slice {
        let n = x.nrows();
        debug_assert_eq!(n, x.ncols());
        match self {
            AugmentOp::None => x.clone(),
            // counter-clockwise quarter turn
            AugmentOp::Rot90 => Slice::from_shape_fn((n, n), |(i, j)| x[[j, n - 1 - i]]),
            AugmentOp::Rot180 => Slice::from_shape_fn((n, n), |(i, j)| x[[n - 1 - i, n - 1 - j]]),
            AugmentOp::Rot270 => Slice::from_shape_fn((n, n), |(i, j)| x[[n - 1 - j, i]]),
            AugmentOp::FlipH => Slice::from_shape_fn((n, n), |(i, j)| x[[i, n - 1 - j]]),
            AugmentOp::FlipV => Slice::from_shape_fn((n, n), |(i, j)| x[[n - 1 - i, j]]),
        }
    }
}

impl FromStr for AugmentOp {
    type Err = LomaeError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => AugmentOp::None,
            "rot90" => AugmentOp::Rot90,
            "rot180" => AugmentOp::Rot180,
            "rot270" => AugmentOp::Rot270,
            "flip_h" => AugmentOp::FlipH,
            "flip_v" => AugmentOp::FlipV,
            other => return Err(LomaeError::InvalidArgument(format!("unknown augmentation '{other}'"))),
        })
    }
}
