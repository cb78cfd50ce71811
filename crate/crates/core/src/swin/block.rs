use rand::Rng;

use super::attention::{AttentionCache, WindowAttention};
use super::grid::{pixel_shuffle, pixel_unshuffle};
use crate::error::ensure;
use crate::nn::{FeatureMap, Grads, LayerNorm, LayerNormCache, Linear, Mlp, MlpCache, ParamStore};
use crate::Result;

/// Pre-norm transformer block: `x + attn(ln1(x))` followed by `+ mlp(ln2(.))`.
#[derive(Debug, Clone)]
pub struct SwinBlock {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
    pub shift: usize,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    n1: LayerNormCache,
    attn: AttentionCache,
    n2: LayerNormCache,
    ln2: FeatureMap,
    mlp: MlpCache,
}

impl BlockCache {
    pub fn attention(&self) -> &AttentionCache {
        &self.attn
    }
}

impl SwinBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        window: usize,
        shift: usize,
        mlp_ratio: f64,
        rng: &mut R,
    ) -> Self {
        let hidden = ((dim as f64) * mlp_ratio).round().max(1.0) as usize;
        Self {
            norm1: LayerNorm::new(ps, &format!("{name}.norm1"), dim, rng),
            attn: WindowAttention::new(ps, &format!("{name}.attn"), dim, heads, window, rng),
            norm2: LayerNorm::new(ps, &format!("{name}.norm2"), dim, rng),
            mlp: Mlp::new(ps, &format!("{name}.mlp"), dim, hidden, rng),
            shift,
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> (FeatureMap, BlockCache) {
        let (ln1, n1) = self.norm1.forward(ps, x);
        let (a, attn) = self.attn.forward(ps, &ln1, self.shift);
        let x1 = x.added(&a);
        let (ln2, n2) = self.norm2.forward(ps, &x1);
        let (m, mlp) = self.mlp.forward(ps, &ln2);
        let y = x1.added(&m);
        (
            y,
            BlockCache {
                n1,
                attn,
                n2,
                ln2,
                mlp,
            },
        )
    }

    pub fn backward(&self, ps: &ParamStore, c: &BlockCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dln2 = self.mlp.backward(ps, &c.ln2, &c.mlp, dy, grads);
        let mut dx1 = self.norm2.backward(ps, &c.n2, &dln2, grads);
        dx1.add_assign(dy);
        let dln1 = self.attn.backward(ps, &c.attn, &dx1, grads);
        let mut dx = self.norm1.backward(ps, &c.n1, &dln1, grads);
        dx.add_assign(&dx1);
        dx
    }
}

/// A run of blocks alternating between regular and shifted windows.
#[derive(Debug, Clone)]
pub struct SwinStage {
    pub blocks: Vec<SwinBlock>,
}

/// Block activations and, when requested, the output of one tapped block.
#[derive(Debug, Clone)]
pub struct StageCache {
    caches: Vec<BlockCache>,
}

impl StageCache {
    pub fn block(&self, i: usize) -> &BlockCache {
        &self.caches[i]
    }
}

/// Hook into a stage pass: `tap` is the local index of the block whose output
/// is recorded in the forward pass and whose output gradient is recorded in
/// the backward pass.
#[derive(Debug, Default)]
pub struct Tap {
    pub index: Option<usize>,
    pub activation: Option<FeatureMap>,
    pub gradient: Option<FeatureMap>,
}

impl SwinStage {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamStore,
        name: &str,
        depth: usize,
        dim: usize,
        heads: usize,
        window: usize,
        mlp_ratio: f64,
        rng: &mut R,
    ) -> Self {
        let blocks = (0..depth)
            .map(|i| {
                let shift = if i % 2 == 0 { 0 } else { window / 2 };
                SwinBlock::new(ps, &format!("{name}.blocks.{i}"), dim, heads, window, shift, mlp_ratio, rng)
            })
            .collect();
        Self { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap, tap: &mut Tap) -> (FeatureMap, StageCache) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let (y, c) = b.forward(ps, &h);
            if tap.index == Some(i) {
                tap.activation = Some(y.clone());
            }
            caches.push(c);
            h = y;
        }
        (h, StageCache { caches })
    }

    pub fn backward(&self, ps: &ParamStore, cache: &StageCache, dy: &FeatureMap, grads: &mut Grads, tap: &mut Tap) -> FeatureMap {
        let mut g = dy.clone();
        for (i, b) in self.blocks.iter().enumerate().rev() {
            if tap.index == Some(i) {
                tap.gradient = Some(g.clone());
            }
            g = b.backward(ps, &cache.caches[i], &g, grads);
        }
        g
    }
}

/// Two-block unit: regular windows then windows shifted by half their size.
pub fn swin_block_pair<R: Rng + ?Sized>(
    ps: &mut ParamStore,
    name: &str,
    dim: usize,
    heads: usize,
    window: usize,
    mlp_ratio: f64,
    rng: &mut R,
) -> SwinStage {
    SwinStage::new(ps, name, 2, dim, heads, window, mlp_ratio, rng)
}

/// Concatenates each 2x2 neighbourhood in the order `(0,0), (1,0), (0,1),
/// (1,1)` and maps `4d -> 2d`.
#[derive(Debug, Clone)]
pub struct PatchMerge {
    pub reduction: Linear,
    pub dim: usize,
}

const MERGE_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

impl PatchMerge {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Self {
        Self {
            reduction: Linear::new(ps, &format!("{name}.reduction"), 4 * dim, 2 * dim, false, rng),
            dim,
        }
    }

    /// Sets every output channel `o` to the mean of input channel `o mod d` over
    /// the four neighbours.
    pub fn averaging_init(&self, ps: &mut ParamStore) {
        let d = self.dim;
        let w = ps.get_mut(self.reduction.weight);
        for q in 0..4 {
            for c in 0..d {
                for o in 0..2 * d {
                    w[(q * d + c) * 2 * d + o] = if o % d == c { 0.25 } else { 0.0 };
                }
            }
        }
    }

    fn gather(&self, x: &FeatureMap) -> FeatureMap {
        let (oh, ow, d) = (x.h / 2, x.w / 2, x.c);
        let mut out = vec![0.0; oh * ow * 4 * d];
        for i in 0..oh {
            for j in 0..ow {
                for (q, (a, b)) in MERGE_OFFSETS.iter().enumerate() {
                    let src = ((2 * i + a) * x.w + 2 * j + b) * d;
                    let dst = (i * ow + j) * 4 * d + q * d;
                    out[dst..dst + d].copy_from_slice(&x.data[src..src + d]);
                }
            }
        }
        FeatureMap::from_vec(oh, ow, 4 * d, out)
    }

    fn scatter(&self, g: &FeatureMap, h: usize, w: usize) -> FeatureMap {
        let d = self.dim;
        let mut out = FeatureMap::zeros(h, w, d);
        for i in 0..g.h {
            for j in 0..g.w {
                for (q, (a, b)) in MERGE_OFFSETS.iter().enumerate() {
                    let dst = ((2 * i + a) * w + 2 * j + b) * d;
                    let src = (i * g.w + j) * 4 * d + q * d;
                    out.data[dst..dst + d].copy_from_slice(&g.data[src..src + d]);
                }
            }
        }
        out
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, FeatureMap)> {
        ensure!(x.h % 2 == 0 && x.w % 2 == 0, Shape, "cannot merge odd grid {}x{}", x.h, x.w);
        ensure!(x.c == self.dim, Shape, "expected {} channels, got {}", self.dim, x.c);
        let cat = self.gather(x);
        Ok((self.reduction.forward(ps, &cat), cat))
    }

    pub fn backward(&self, ps: &ParamStore, cat: &FeatureMap, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dcat = self.reduction.backward(ps, cat, dy, grads);
        self.scatter(&dcat, 2 * cat.h, 2 * cat.w)
    }
}

/// Maps `D -> 2D` and rearranges to a grid of twice the size with `D/2`
/// channels.
#[derive(Debug, Clone)]
pub struct PatchExpand {
    pub expand: Linear,
    pub dim: usize,
}

impl PatchExpand {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Self {
        assert!(dim % 2 == 0, "expand needs an even channel count");
        Self {
            expand: Linear::new(ps, &format!("{name}.expand"), dim, 2 * dim, false, rng),
            dim,
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<FeatureMap> {
        ensure!(x.c == self.dim, Shape, "expected {} channels, got {}", self.dim, x.c);
        pixel_shuffle(&self.expand.forward(ps, x), 2)
    }

    pub fn backward(&self, ps: &ParamStore, x: &FeatureMap, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dmid = pixel_unshuffle(dy, 2).expect("expand gradient has the forward shape");
        self.expand.backward(ps, x, &dmid, grads)
    }
}

/// Non-overlapping `p x p` patches of a single-channel map, linearly embedded.
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    pub proj: Linear,
    pub patch: usize,
}

impl PatchEmbed {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, name: &str, patch: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            proj: Linear::new(ps, &format!("{name}.proj"), patch * patch, dim, true, rng),
            patch,
        }
    }

    /// Returns the embedded grid and the unshuffled patches the backward pass
    /// needs.
    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> Result<(FeatureMap, FeatureMap)> {
        ensure!(x.c == 1, Shape, "patch embedding takes one channel, got {}", x.c);
        ensure!(
            x.h % self.patch == 0 && x.w % self.patch == 0,
            Shape,
            "{}x{} image not divisible by patch {}",
            x.h,
            x.w,
            self.patch
        );
        let patches = pixel_unshuffle(x, self.patch)?;
        Ok((self.proj.forward(ps, &patches), patches))
    }

    pub fn backward(&self, ps: &ParamStore, patches: &FeatureMap, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let dp = self.proj.backward(ps, patches, dy, grads);
        pixel_shuffle(&dp, self.patch).expect("embed gradient has the forward shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
        FeatureMap::from_vec(h, w, c, (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zeroed_output_weights_make_block_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamStore::new();
        let stage = swin_block_pair(&mut ps, "s", 8, 2, 4, 2.0, &mut rng);
        for b in &stage.blocks {
            for id in [b.attn.proj.weight, b.attn.proj.bias.unwrap(), b.mlp.fc2.weight, b.mlp.fc2.bias.unwrap()] {
                ps.get_mut(id).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let x = random_map(&mut rng, 8, 8, 8);
        let (y, _) = stage.forward(&ps, &x, &mut Tap::default());
        assert_eq!(y, x);
        assert_eq!(stage.blocks[1].shift, 2);
    }

    #[test]
    fn merge_and_expand_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamStore::new();
        let merge = PatchMerge::new(&mut ps, "m", 60, &mut rng);
        let expand = PatchExpand::new(&mut ps, "e", 120, &mut rng);
        let x = random_map(&mut rng, 8, 8, 60);
        let (m, _) = merge.forward(&ps, &x).unwrap();
        assert_eq!((m.h, m.w, m.c), (4, 4, 120));
        let e = expand.forward(&ps, &m).unwrap();
        assert!(e.same_shape(&x));
        assert!(merge.forward(&ps, &random_map(&mut rng, 3, 4, 60)).is_err());
    }

    #[test]
    fn averaging_merge_keeps_constant_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ps = ParamStore::new();
        let merge = PatchMerge::new(&mut ps, "m", 3, &mut rng);
        merge.averaging_init(&mut ps);
        let x = FeatureMap::from_vec(4, 4, 3, [0.5, -1.25, 2.0].iter().copied().cycle().take(48).collect());
        let (y, _) = merge.forward(&ps, &x).unwrap();
        for t in y.data.chunks(6) {
            assert_eq!(t, &[0.5, -1.25, 2.0, 0.5, -1.25, 2.0]);
        }
    }

    #[test]
    fn patch_embed_is_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamStore::new();
        let pe = PatchEmbed::new(&mut ps, "pe", 8, 12, &mut rng);
        let x = random_map(&mut rng, 64, 64, 1);
        let (t, _) = pe.forward(&ps, &x).unwrap();
        assert_eq!((t.h, t.w, t.c), (8, 8, 12));
        // swap patches (0,0) and (3,5)
        let mut xs = x.clone();
        for a in 0..8 {
            for b in 0..8 {
                xs.data.swap(a * 64 + b, (24 + a) * 64 + 40 + b);
            }
        }
        let (ts, _) = pe.forward(&ps, &xs).unwrap();
        for tok in 0..64 {
            let src = match tok {
                0 => 3 * 8 + 5,
                29 => 0,
                other => other,
            };
            assert_eq!(&ts.data[tok * 12..(tok + 1) * 12], &t.data[src * 12..(src + 1) * 12]);
        }
    }
}
