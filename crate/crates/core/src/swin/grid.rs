//! Window bookkeeping: partition of a token map into non-overlapping windows,
//! cyclic shifting, and the region labels used to mask wrapped-around pairs.

use crate::error::ensure;
use crate::nn::FeatureMap;
use crate::Result;

/// Window size and shift actually used on an `h x w` grid. When the grid is no
/// larger than the configured window the whole grid forms one window and no
/// shift is applied.
pub fn effective_window(h: usize, w: usize, window: usize, shift: usize) -> (usize, usize) {
    let m = h.min(w);
    if m <= window {
        (m, 0)
    } else {
        (window, shift)
    }
}

/// For each windowed position (window-major, then raster order inside the
/// window) the flat index of the source token in the unshifted map. The shifted
/// map is the torus roll by `(-shift, -shift)`.
pub fn window_index(h: usize, w: usize, ws: usize, shift: usize) -> Vec<usize> {
    let (nwh, nww) = (h / ws, w / ws);
    let mut idx = Vec::with_capacity(h * w);
    for wr in 0..nwh {
        for wc in 0..nww {
            for a in 0..ws {
                for b in 0..ws {
                    let r = (wr * ws + a + shift) % h;
                    let c = (wc * ws + b + shift) % w;
                    idx.push(r * w + c);
                }
            }
        }
    }
    idx
}

fn band(pos: usize, len: usize, ws: usize, shift: usize) -> u8 {
    if pos < len - ws {
        0
    } else if pos < len - shift {
        1
    } else {
        2
    }
}

/// Region label per windowed position; two tokens of one window may attend to
/// each other only when their labels agree. All zeros when `shift == 0`.
pub fn region_labels(h: usize, w: usize, ws: usize, shift: usize) -> Vec<u8> {
    let (nwh, nww) = (h / ws, w / ws);
    let mut labels = Vec::with_capacity(h * w);
    for wr in 0..nwh {
        for wc in 0..nww {
            for a in 0..ws {
                for b in 0..ws {
                    if shift == 0 {
                        labels.push(0);
                    } else {
                        let r = wr * ws + a;
                        let c = wc * ws + b;
                        labels.push(band(r, h, ws, shift) * 3 + band(c, w, ws, shift));
                    }
                }
            }
        }
    }
    labels
}

/// Windowed token tensor `[batch][window][token][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub batch: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub window_size: usize,
    pub shift: usize,
    pub dim: usize,
    pub tokens: Vec<f64>,
}

impl TokenGrid {
    /// Partitions same-shaped maps into windows of `window_size`, after a
    /// cyclic roll by `shift`.
    pub fn partition(maps: &[FeatureMap], window_size: usize, shift: usize) -> Result<Self> {
        ensure!(!maps.is_empty(), InvalidArgument, "empty batch");
        let (h, w, d) = (maps[0].h, maps[0].w, maps[0].c);
        ensure!(maps.iter().all(|m| m.h == h && m.w == w && m.c == d), Shape, "batch members differ in shape");
        ensure!(window_size > 0, InvalidArgument, "window size must be positive");
        ensure!(shift < window_size, InvalidArgument, "shift {shift} outside [0, {window_size})");
        ensure!(
            h % window_size == 0 && w % window_size == 0,
            Shape,
            "grid {h}x{w} not divisible by window {window_size}"
        );
        let idx = window_index(h, w, window_size, shift);
        let mut tokens = Vec::with_capacity(maps.len() * h * w * d);
        for m in maps {
            for &src in &idx {
                tokens.extend_from_slice(&m.data[src * d..(src + 1) * d]);
            }
        }
        Ok(Self {
            batch: maps.len(),
            grid_h: h,
            grid_w: w,
            window_size,
            shift,
            dim: d,
            tokens,
        })
    }

    pub fn n_windows(&self) -> usize {
        (self.grid_h / self.window_size) * (self.grid_w / self.window_size)
    }

    pub fn tokens_per_window(&self) -> usize {
        self.window_size * self.window_size
    }

    pub fn token(&self, b: usize, window: usize, t: usize) -> &[f64] {
        let n = self.tokens_per_window();
        let off = ((b * self.n_windows() + window) * n + t) * self.dim;
        &self.tokens[off..off + self.dim]
    }

    /// Undoes the partition and the shift.
    pub fn reverse(&self) -> Vec<FeatureMap> {
        let (h, w, d) = (self.grid_h, self.grid_w, self.dim);
        let idx = window_index(h, w, self.window_size, self.shift);
        let per = h * w * d;
        (0..self.batch)
            .map(|b| {
                let src = &self.tokens[b * per..(b + 1) * per];
                let mut m = FeatureMap::zeros(h, w, d);
                for (p, &dst) in idx.iter().enumerate() {
                    m.data[dst * d..(dst + 1) * d].copy_from_slice(&src[p * d..(p + 1) * d]);
                }
                m
            })
            .collect()
    }
}

/// Rolls the underlying token map by a further `(-offset, -offset)`.
pub fn cyclic_shift(grid: &TokenGrid, offset: usize) -> Result<TokenGrid> {
    ensure!(
        grid.shift + offset < grid.window_size,
        InvalidArgument,
        "offset {offset} outside [0, {})",
        grid.window_size - grid.shift
    );
    if offset == 0 {
        return Ok(grid.clone());
    }
    TokenGrid::partition(&grid.reverse(), grid.window_size, grid.shift + offset)
}

/// Returns the grid to zero shift.
pub fn cyclic_unshift(grid: &TokenGrid) -> Result<TokenGrid> {
    if grid.shift == 0 {
        return Ok(grid.clone());
    }
    TokenGrid::partition(&grid.reverse(), grid.window_size, 0)
}

/// Space-to-depth: `(h, w, c)` to `(h/r, w/r, r*r*c)` with channel index
/// `(a * r + b) * c + ch` for the pixel at offset `(a, b)` inside each block.
pub fn pixel_unshuffle(x: &FeatureMap, r: usize) -> Result<FeatureMap> {
    ensure!(r > 0 && x.h % r == 0 && x.w % r == 0, Shape, "map {}x{} not divisible by {r}", x.h, x.w);
    let (oh, ow, c) = (x.h / r, x.w / r, x.c);
    let oc = r * r * c;
    let mut out = vec![0.0; oh * ow * oc];
    for i in 0..oh {
        for j in 0..ow {
            for a in 0..r {
                for b in 0..r {
                    let src = ((i * r + a) * x.w + j * r + b) * c;
                    let dst = (i * ow + j) * oc + (a * r + b) * c;
                    out[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                }
            }
        }
    }
    Ok(FeatureMap::from_vec(oh, ow, oc, out))
}

/// Depth-to-space, the inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle(x: &FeatureMap, r: usize) -> Result<FeatureMap> {
    ensure!(r > 0 && x.c % (r * r) == 0, Shape, "{} channels not divisible by {}", x.c, r * r);
    let c = x.c / (r * r);
    let (oh, ow) = (x.h * r, x.w * r);
    let mut out = vec![0.0; oh * ow * c];
    for i in 0..x.h {
        for j in 0..x.w {
            for a in 0..r {
                for b in 0..r {
                    let src = (i * x.w + j) * x.c + (a * r + b) * c;
                    let dst = ((i * r + a) * ow + j * r + b) * c;
                    out[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                }
            }
        }
    }
    Ok(FeatureMap::from_vec(oh, ow, c, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, d: usize) -> FeatureMap {
        FeatureMap::from_vec(h, w, d, (0..h * w * d).map(|v| v as f64).collect())
    }

    #[test]
    fn partition_then_reverse_is_identity() {
        let maps = vec![ramp(8, 8, 3), ramp(8, 8, 3)];
        for shift in 0..4 {
            let g = TokenGrid::partition(&maps, 4, shift).unwrap();
            assert_eq!(g.n_windows() * g.tokens_per_window(), 64);
            assert_eq!(g.reverse(), maps);
        }
    }

    #[test]
    fn shift_matches_explicit_roll() {
        let m = ramp(8, 8, 1);
        let g = TokenGrid::partition(std::slice::from_ref(&m), 4, 0).unwrap();
        let s = cyclic_shift(&g, 2).unwrap();
        // first token of the first window comes from (2, 2)
        assert_eq!(s.token(0, 0, 0), &[(2 * 8 + 2) as f64]);
        // last window holds the wrapped corner (1, 1) at its last slot
        assert_eq!(s.token(0, 3, 15), &[(8 + 1) as f64]);
        assert_eq!(cyclic_unshift(&s).unwrap(), g);
        assert_eq!(cyclic_shift(&g, 0).unwrap(), g);
        assert!(cyclic_shift(&g, 4).is_err());
    }

    #[test]
    fn labels_are_uniform_without_shift() {
        assert!(region_labels(8, 8, 4, 0).iter().all(|&l| l == 0));
        let l = region_labels(8, 8, 4, 2);
        // window 0 lies entirely in band (0, 0)
        assert!(l[..16].iter().all(|&v| v == 0));
        // the bottom-right window touches all four wrap regions
        let mut last: Vec<u8> = l[48..].to_vec();
        last.sort();
        last.dedup();
        assert_eq!(last, vec![4, 5, 7, 8]);
    }

    #[test]
    fn effective_window_collapses_small_grids() {
        assert_eq!(effective_window(4, 4, 8, 4), (4, 0));
        assert_eq!(effective_window(16, 16, 8, 4), (8, 4));
        assert_eq!(effective_window(8, 8, 8, 4), (8, 0));
    }

    #[test]
    fn shuffle_round_trip() {
        let m = ramp(8, 4, 3);
        let u = pixel_unshuffle(&m, 2).unwrap();
        assert_eq!((u.h, u.w, u.c), (4, 2, 12));
        assert_eq!(pixel_shuffle(&u, 2).unwrap(), m);
    }
}
