//! Body networks. Both map a one-channel image to a one-channel image; the
//! front-to-end shortcut is added by [`super::Model`].

use rand::Rng;

use super::config::ModelConfig;
use crate::nn::{Conv3x3, ConvCache, FeatureMap, Grads, LayerNorm, LayerNormCache, Linear, ParamStore};
use crate::swin::{pixel_shuffle, pixel_unshuffle, PatchEmbed, PatchExpand, PatchMerge, StageCache, SwinStage, Tap};
use crate::Result;

/// Block tap addressed by the global block index (forward order).
#[derive(Debug, Default, Clone)]
pub struct BlockTap {
    pub index: Option<usize>,
    pub activation: Option<FeatureMap>,
    pub gradient: Option<FeatureMap>,
}

impl BlockTap {
    pub fn at(index: usize) -> Self {
        Self {
            index: Some(index),
            ..Self::default()
        }
    }

    fn local(&self, offset: usize, len: usize) -> Tap {
        Tap {
            index: self.index.and_then(|g| (g >= offset && g < offset + len).then(|| g - offset)),
            ..Tap::default()
        }
    }

    fn absorb(&mut self, t: Tap) {
        if t.activation.is_some() {
            self.activation = t.activation;
        }
        if t.gradient.is_some() {
            self.gradient = t.gradient;
        }
    }
}

fn run_stage(stage: &SwinStage, ps: &ParamStore, x: &FeatureMap, offset: usize, tap: &mut BlockTap) -> (FeatureMap, StageCache) {
    let mut t = tap.local(offset, stage.len());
    let out = stage.forward(ps, x, &mut t);
    tap.absorb(t);
    out
}

fn back_stage(
    stage: &SwinStage,
    ps: &ParamStore,
    cache: &StageCache,
    dy: &FeatureMap,
    grads: &mut Grads,
    offset: usize,
    tap: &mut BlockTap,
) -> FeatureMap {
    let mut t = tap.local(offset, stage.len());
    let dx = stage.backward(ps, cache, dy, grads, &mut t);
    tap.absorb(t);
    dx
}

#[derive(Debug, Clone)]
struct ResidualGroup {
    stage: SwinStage,
    conv: Conv3x3,
}

/// Flat network: shallow conv, residual groups of blocks at full resolution,
/// a body-level residual, and a reconstruction conv.
#[derive(Debug, Clone)]
pub struct SwinIr {
    conv_first: Conv3x3,
    groups: Vec<ResidualGroup>,
    norm: LayerNorm,
    conv_after_body: Conv3x3,
    pub conv_last: Conv3x3,
}

#[derive(Debug, Clone)]
pub struct SwinIrCache {
    first: ConvCache,
    groups: Vec<(StageCache, ConvCache)>,
    norm: LayerNormCache,
    after: ConvCache,
    last: ConvCache,
    pub features: FeatureMap,
}

impl SwinIr {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let c = cfg.embed_dim;
        let conv_first = Conv3x3::new(ps, "conv_first", 1, c, rng);
        let groups = cfg
            .depths
            .iter()
            .enumerate()
            .map(|(g, &depth)| ResidualGroup {
                stage: SwinStage::new(
                    ps,
                    &format!("layers.{g}.residual_group"),
                    depth,
                    c,
                    cfg.n_heads,
                    cfg.window_size,
                    cfg.mlp_ratio,
                    rng,
                ),
                conv: Conv3x3::new(ps, &format!("layers.{g}.conv"), c, c, rng),
            })
            .collect();
        Self {
            conv_first,
            groups,
            norm: LayerNorm::new(ps, "norm", c, rng),
            conv_after_body: Conv3x3::new(ps, "conv_after_body", c, c, rng),
            conv_last: Conv3x3::new(ps, "conv_last", c, 1, rng),
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap, tap: &mut BlockTap) -> (FeatureMap, SwinIrCache) {
        let (f0, first) = self.conv_first.forward(ps, x);
        let mut h = f0.clone();
        let mut offset = 0;
        let mut groups = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let (s, sc) = run_stage(&g.stage, ps, &h, offset, tap);
            offset += g.stage.len();
            let (c, cc) = g.conv.forward(ps, &s);
            h.add_assign(&c);
            groups.push((sc, cc));
        }
        let (n, norm) = self.norm.forward(ps, &h);
        let (mut f, after) = self.conv_after_body.forward(ps, &n);
        f.add_assign(&f0);
        let (y, last) = self.conv_last.forward(ps, &f);
        (
            y,
            SwinIrCache {
                first,
                groups,
                norm,
                after,
                last,
                features: f,
            },
        )
    }

    pub fn backward(&self, ps: &ParamStore, cache: &SwinIrCache, dy: &FeatureMap, grads: &mut Grads, tap: &mut BlockTap) -> FeatureMap {
        let df = self.conv_last.backward(ps, &cache.last, dy, grads);
        let dn = self.conv_after_body.backward(ps, &cache.after, &df, grads);
        let mut dh = self.norm.backward(ps, &cache.norm, &dn, grads);
        let mut offset: usize = self.groups.iter().map(|g| g.stage.len()).sum();
        for (g, (sc, cc)) in self.groups.iter().zip(&cache.groups).rev() {
            offset -= g.stage.len();
            let ds = g.conv.backward(ps, cc, &dh, grads);
            let dstage = back_stage(&g.stage, ps, sc, &ds, grads, offset, tap);
            dh.add_assign(&dstage);
        }
        dh.add_assign(&df);
        self.conv_first.backward(ps, &cache.first, &dh, grads)
    }
}

#[derive(Debug, Clone)]
struct DecoderLevel {
    expand: PatchExpand,
    concat: Linear,
    stage: SwinStage,
}

/// U-shaped network: patch embedding, encoder levels with patch merging, a
/// bottleneck, and decoder levels that expand, concatenate the skip and project
/// back before their blocks.
#[derive(Debug, Clone)]
pub struct Sunet {
    embed: PatchEmbed,
    encoder: Vec<(SwinStage, PatchMerge)>,
    bottleneck: SwinStage,
    /// Ordered from the deepest decoder level to the shallowest.
    decoder: Vec<DecoderLevel>,
    norm_up: LayerNorm,
    up: Linear,
    patch: usize,
    pub conv_last: Conv3x3,
}

#[derive(Debug, Clone)]
struct DecoderCache {
    expand_in: FeatureMap,
    concat_in: FeatureMap,
    stage: StageCache,
}

#[derive(Debug, Clone)]
pub struct SunetCache {
    patches: FeatureMap,
    encoder: Vec<(StageCache, FeatureMap)>,
    bottleneck: StageCache,
    decoder: Vec<DecoderCache>,
    norm: LayerNormCache,
    up_in: FeatureMap,
    last: ConvCache,
    pub features: FeatureMap,
}

impl Sunet {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let c = cfg.embed_dim;
        let levels = cfg.depths.len();
        let embed = PatchEmbed::new(ps, "patch_embed", cfg.embed_patch, c, rng);
        let stage = |ps: &mut ParamStore, rng: &mut R, name: String, level: usize| {
            SwinStage::new(
                ps,
                &name,
                cfg.depths[level],
                c << level,
                cfg.n_heads << level,
                cfg.window_size,
                cfg.mlp_ratio,
                rng,
            )
        };
        let mut encoder = Vec::new();
        for l in 0..levels - 1 {
            let s = stage(ps, rng, format!("layers.{l}"), l);
            let m = PatchMerge::new(ps, &format!("layers.{l}.downsample"), c << l, rng);
            encoder.push((s, m));
        }
        let bottleneck = stage(ps, rng, format!("layers.{}", levels - 1), levels - 1);
        let mut decoder = Vec::new();
        for l in (0..levels - 1).rev() {
            let expand = PatchExpand::new(ps, &format!("layers_up.{l}.upsample"), c << (l + 1), rng);
            let concat = Linear::new(ps, &format!("concat_back_dim.{l}"), 2 * (c << l), c << l, true, rng);
            let s = stage(ps, rng, format!("layers_up.{l}"), l);
            decoder.push(DecoderLevel { expand, concat, stage: s });
        }
        let p = cfg.embed_patch;
        Self {
            embed,
            encoder,
            bottleneck,
            decoder,
            norm_up: LayerNorm::new(ps, "norm_up", c, rng),
            up: Linear::new(ps, "up.proj", c, p * p * c, false, rng),
            patch: p,
            conv_last: Conv3x3::new(ps, "output", c, 1, rng),
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap, tap: &mut BlockTap) -> Result<(FeatureMap, SunetCache)> {
        let (mut h, patches) = self.embed.forward(ps, x)?;
        let mut offset = 0;
        let mut skips = Vec::new();
        let mut encoder = Vec::new();
        for (stage, merge) in &self.encoder {
            let (s, sc) = run_stage(stage, ps, &h, offset, tap);
            offset += stage.len();
            let (m, cat) = merge.forward(ps, &s)?;
            skips.push(s);
            encoder.push((sc, cat));
            h = m;
        }
        let (b, bottleneck) = run_stage(&self.bottleneck, ps, &h, offset, tap);
        offset += self.bottleneck.len();
        h = b;
        let mut decoder = Vec::new();
        for level in &self.decoder {
            let up = level.expand.forward(ps, &h)?;
            let skip = skips.pop().expect("one skip per decoder level");
            let concat_in = up.concat_channels(&skip);
            let proj = level.concat.forward(ps, &concat_in);
            let (s, sc) = run_stage(&level.stage, ps, &proj, offset, tap);
            offset += level.stage.len();
            decoder.push(DecoderCache {
                expand_in: h,
                concat_in,
                stage: sc,
            });
            h = s;
        }
        let (n, norm) = self.norm_up.forward(ps, &h);
        let f = pixel_shuffle(&self.up.forward(ps, &n), self.patch)?;
        let (y, last) = self.conv_last.forward(ps, &f);
        Ok((
            y,
            SunetCache {
                patches,
                encoder,
                bottleneck,
                decoder,
                norm,
                up_in: n,
                last,
                features: f,
            },
        ))
    }

    pub fn backward(&self, ps: &ParamStore, cache: &SunetCache, dy: &FeatureMap, grads: &mut Grads, tap: &mut BlockTap) -> FeatureMap {
        let df = self.conv_last.backward(ps, &cache.last, dy, grads);
        let dup = pixel_unshuffle(&df, self.patch).expect("shape fixed by forward");
        let dn = self.up.backward(ps, &cache.up_in, &dup, grads);
        let mut dh = self.norm_up.backward(ps, &cache.norm, &dn, grads);
        let enc_blocks: usize = self.encoder.iter().map(|(s, _)| s.len()).sum();
        let mut offset = enc_blocks + self.bottleneck.len() + self.decoder.iter().map(|d| d.stage.len()).sum::<usize>();
        let mut dskips = Vec::new();
        for (level, dc) in self.decoder.iter().zip(&cache.decoder).rev() {
            offset -= level.stage.len();
            let dproj = back_stage(&level.stage, ps, &dc.stage, &dh, grads, offset, tap);
            let dcat = level.concat.backward(ps, &dc.concat_in, &dproj, grads);
            let (dup, dskip) = dcat.split_channels(level.expand.dim / 2);
            dskips.push(dskip);
            dh = level.expand.backward(ps, &dc.expand_in, &dup, grads);
        }
        // dskips now runs from the shallowest level to the deepest
        offset -= self.bottleneck.len();
        dh = back_stage(&self.bottleneck, ps, &cache.bottleneck, &dh, grads, offset, tap);
        for (l, ((stage, merge), (sc, cat))) in self.encoder.iter().zip(&cache.encoder).enumerate().rev() {
            let mut ds = merge.backward(ps, cat, &dh, grads);
            ds.add_assign(&dskips[l]);
            offset -= stage.len();
            dh = back_stage(stage, ps, sc, &ds, grads, offset, tap);
        }
        self.embed.backward(ps, &cache.patches, &dh, grads)
    }
}
