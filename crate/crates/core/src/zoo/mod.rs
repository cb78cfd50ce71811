//! Denoiser architectures with a switchable front-to-end residual shortcut,
//! checkpoints, and weight transfer between training stages.

pub mod checkpoint;
pub mod config;
pub mod nets;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{transfer_weights, Checkpoint, Stage};
pub use config::{Arch, ModelConfig};
pub use nets::{BlockTap, Sunet, SunetCache, SwinIr, SwinIrCache};

use crate::error::ensure;
use crate::nn::{FeatureMap, Grads, ParamStore};
use crate::{round_to_f32, Result, Slice};

#[derive(Debug, Clone)]
enum Net {
    SwinIr(SwinIr),
    Sunet(Sunet),
}

#[derive(Debug, Clone)]
enum NetCache {
    SwinIr(SwinIrCache),
    Sunet(SunetCache),
}

/// Activations of one training-mode forward pass.
#[derive(Debug, Clone)]
pub struct TrainCache {
    net: NetCache,
    pub tap: BlockTap,
}

impl TrainCache {
    /// Last feature map before the reconstruction conv.
    pub fn features(&self) -> &FeatureMap {
        match &self.net {
            NetCache::SwinIr(c) => &c.features,
            NetCache::Sunet(c) => &c.features,
        }
    }
}

/// Gradients returned by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub input: Slice,
    pub tap_gradient: Option<FeatureMap>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    net: Net,
}

impl Model {
    /// Builds and initializes a model; the same `(config, seed)` always gives
    /// the same weights.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let net = match config.arch {
            Arch::SwinirStyle => Net::SwinIr(SwinIr::new(&mut params, config, &mut rng)),
            Arch::SunetStyle => Net::Sunet(Sunet::new(&mut params, config, &mut rng)),
        };
        Ok(Self {
            config: config.clone(),
            params,
            net,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.config.n_blocks()
    }

    /// Index of the middle block used as the saliency layer.
    pub fn middle_block(&self) -> usize {
        self.n_blocks() / 2
    }

    /// Zeroes the reconstruction conv so the body outputs exactly zero.
    pub fn zero_output_layer(&mut self) {
        let conv = match &self.net {
            Net::SwinIr(n) => n.conv_last.clone(),
            Net::Sunet(n) => n.conv_last.clone(),
        };
        self.params.get_mut(conv.weight).iter_mut().for_each(|v| *v = 0.0);
        self.params.get_mut(conv.bias).iter_mut().for_each(|v| *v = 0.0);
    }

    fn check_input(&self, x: &Slice) -> Result<()> {
        let n = self.config.input_size;
        ensure!(x.dim() == (n, n), Shape, "model expects {n}x{n} input, got {:?}", x.dim());
        Ok(())
    }

    fn body(&self, x: &FeatureMap, tap: &mut BlockTap) -> Result<(FeatureMap, NetCache)> {
        Ok(match &self.net {
            Net::SwinIr(n) => {
                let (y, c) = n.forward(&self.params, x, tap);
                (y, NetCache::SwinIr(c))
            }
            Net::Sunet(n) => {
                let (y, c) = n.forward(&self.params, x, tap)?;
                (y, NetCache::Sunet(c))
            }
        })
    }

    /// Inference. The body output is rounded to the `f32` grid before the
    /// shortcut is added, so with images on that grid the shortcut term is
    /// recovered exactly by subtraction.
    pub fn forward(&self, x: &Slice) -> Result<Slice> {
        self.check_input(x)?;
        let (body, _) = self.body(&FeatureMap::from_slice(x), &mut BlockTap::default())?;
        let body = body.to_slice();
        Ok(if self.config.use_front_to_end_shortcut {
            ndarray::Zip::from(&body).and(x).map_collect(|&b, &v| round_to_f32(b) + v)
        } else {
            body.mapv(round_to_f32)
        })
    }

    pub fn forward_batch(&self, xs: &[Slice]) -> Result<Vec<Slice>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    /// Unrounded forward pass that keeps activations for [`Model::backward`].
    pub fn forward_train(&self, x: &Slice, tap: Option<usize>) -> Result<(Slice, TrainCache)> {
        self.check_input(x)?;
        if let Some(t) = tap {
            ensure!(t < self.n_blocks(), InvalidArgument, "block {t} out of range (model has {})", self.n_blocks());
        }
        let mut bt = BlockTap {
            index: tap,
            ..BlockTap::default()
        };
        let (body, net) = self.body(&FeatureMap::from_slice(x), &mut bt)?;
        let mut y = body.to_slice();
        if self.config.use_front_to_end_shortcut {
            y += x;
        }
        Ok((y, TrainCache { net, tap: bt }))
    }

    /// Accumulates parameter gradients for output gradient `dy`.
    pub fn backward(&self, cache: &TrainCache, dy: &Slice, grads: &mut Grads) -> BackwardResult {
        let g = FeatureMap::from_slice(dy);
        let mut tap = BlockTap {
            index: cache.tap.index,
            ..BlockTap::default()
        };
        let dx = match (&self.net, &cache.net) {
            (Net::SwinIr(n), NetCache::SwinIr(c)) => n.backward(&self.params, c, &g, grads, &mut tap),
            (Net::Sunet(n), NetCache::Sunet(c)) => n.backward(&self.params, c, &g, grads, &mut tap),
            _ => unreachable!("cache built by this model"),
        };
        let mut input = dx.to_slice();
        if self.config.use_front_to_end_shortcut {
            input += dy;
        }
        BackwardResult {
            input,
            tap_gradient: tap.gradient,
        }
    }

    /// Last-layer feature map for an input.
    pub fn features(&self, x: &Slice) -> Result<FeatureMap> {
        let (_, cache) = self.forward_train(x, None)?;
        Ok(match cache.net {
            NetCache::SwinIr(c) => c.features,
            NetCache::Sunet(c) => c.features,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_slice(n: usize, seed: u64) -> Slice {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Slice::from_shape_fn((n, n), |_| round_to_f32(rng.random_range(0.0..1.0)))
    }

    fn small(arch: Arch) -> ModelConfig {
        let base = match arch {
            Arch::SwinirStyle => ModelConfig::desk_swinir(),
            Arch::SunetStyle => ModelConfig::desk_sunet(),
        };
        ModelConfig {
            embed_dim: 8,
            input_size: 16,
            window_size: 4,
            depths: vec![2, 1],
            embed_patch: 2,
            ..base
        }
    }

    #[test]
    fn builds_are_deterministic() {
        let a = Model::build(&ModelConfig::paper_swinir(), 5).unwrap();
        let b = Model::build(&ModelConfig::paper_swinir(), 5).unwrap();
        assert_eq!(a.params.num_scalars(), b.params.num_scalars());
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn sunet_output_shape() {
        let m = Model::build(&ModelConfig::desk_sunet(), 0).unwrap();
        let y = m.forward(&random_slice(64, 1)).unwrap();
        assert_eq!(y.dim(), (64, 64));
    }

    #[test]
    fn zeroed_body_gives_identity_or_zero() {
        for arch in [Arch::SwinirStyle, Arch::SunetStyle] {
            let mut m = Model::build(&small(arch), 1).unwrap();
            m.zero_output_layer();
            let x = random_slice(16, 2);
            assert_eq!(m.forward(&x).unwrap(), x);
            let mut off = m.clone();
            off.config.use_front_to_end_shortcut = false;
            assert!(off.forward(&x).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shortcut_difference_is_exactly_the_input() {
        for arch in [Arch::SwinirStyle, Arch::SunetStyle] {
            let on = Model::build(&small(arch), 3).unwrap();
            let mut off = on.clone();
            off.config.use_front_to_end_shortcut = false;
            let x = random_slice(16, 4);
            let d = on.forward(&x).unwrap() - off.forward(&x).unwrap();
            assert_eq!(d, x);
        }
    }

    #[test]
    fn wrong_input_size_rejected() {
        let m = Model::build(&small(Arch::SwinirStyle), 0).unwrap();
        assert!(m.forward(&random_slice(32, 0)).is_err());
    }

    fn check_gradients(arch: Arch) {
        let m = Model::build(&small(arch), 7).unwrap();
        let x = random_slice(16, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = Slice::from_shape_fn((16, 16), |_| rng.random_range(-1.0..1.0));
        let (_, cache) = m.forward_train(&x, None).unwrap();
        let mut grads = Grads::zeros_like(&m.params);
        let back = m.backward(&cache, &r, &mut grads);
        let loss = |m: &Model, x: &Slice| (&m.forward_train(x, None).unwrap().0 * &r).sum();
        let h = 1e-5;
        for ti in 0..m.params.len() {
            let len = m.params.tensors()[ti].data.len();
            let k = len / 3;
            let mut p = m.clone();
            p.params.tensors_mut()[ti].data[k] += h;
            let fp = loss(&p, &x);
            p.params.tensors_mut()[ti].data[k] -= 2.0 * h;
            let fm = loss(&p, &x);
            let fd = (fp - fm) / (2.0 * h);
            let an = grads.by_index(ti)[k];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            assert!(err < 1e-4, "{arch}: {} fd {fd} analytic {an}", m.params.tensors()[ti].name);
        }
        for &(i, j) in &[(0, 0), (5, 9), (15, 3)] {
            let mut xp = x.clone();
            xp[[i, j]] += h;
            let mut xm = x.clone();
            xm[[i, j]] -= h;
            let fd = (loss(&m, &xp) - loss(&m, &xm)) / (2.0 * h);
            let an = back.input[[i, j]];
            assert!((fd - an).abs() / fd.abs().max(1e-6) < 1e-4, "{arch} input ({i},{j}): {fd} vs {an}");
        }
    }

    #[test]
    fn swinir_gradients_match_finite_differences() {
        check_gradients(Arch::SwinirStyle);
    }

    #[test]
    fn sunet_gradients_match_finite_differences() {
        check_gradients(Arch::SunetStyle);
    }

    #[test]
    fn tap_captures_activation_and_gradient() {
        for arch in [Arch::SwinirStyle, Arch::SunetStyle] {
            let m = Model::build(&small(arch), 10).unwrap();
            let x = random_slice(16, 11);
            let mid = m.middle_block();
            let (_, cache) = m.forward_train(&x, Some(mid)).unwrap();
            let a = cache.tap.activation.clone().expect("activation captured");
            let mut grads = Grads::zeros_like(&m.params);
            let back = m.backward(&cache, &Slice::ones((16, 16)), &mut grads);
            let g = back.tap_gradient.expect("gradient captured");
            assert!(g.same_shape(&a));
        }
    }
}
