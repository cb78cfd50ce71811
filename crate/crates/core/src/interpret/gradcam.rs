use crate::error::ensure;
use crate::nn::{FeatureMap, Grads};
use crate::zoo::Model;
use crate::{Result, Slice};

/// Square target region `p`: top-left corner and side length in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub values: Slice,
    pub target: Region,
    pub layer_tag: String,
}

/// A network that can report one intermediate activation together with the
/// gradient of a scalar loss with respect to it.
pub trait LayerProbe {
    fn n_layers(&self) -> usize;

    /// Layer used when the caller does not pick one.
    fn default_layer(&self) -> usize {
        self.n_layers() / 2
    }

    fn layer_tag(&self, layer: usize) -> String {
        format!("layer{layer}")
    }

    /// Runs the net on `x`, backpropagates `dloss(prediction)` and returns
    /// the activation and its gradient at `layer`.
    fn probe(&self, x: &Slice, layer: usize, dloss: &dyn Fn(&Slice) -> Result<Slice>) -> Result<(FeatureMap, FeatureMap)>;
}

impl LayerProbe for Model {
    fn n_layers(&self) -> usize {
        self.n_blocks()
    }

    fn default_layer(&self) -> usize {
        self.middle_block()
    }

    fn layer_tag(&self, layer: usize) -> String {
        format!("{}/block{layer}", self.config.arch)
    }

    fn probe(&self, x: &Slice, layer: usize, dloss: &dyn Fn(&Slice) -> Result<Slice>) -> Result<(FeatureMap, FeatureMap)> {
        let (pred, mut cache) = self.forward_train(x, Some(layer))?;
        let dy = dloss(&pred)?;
        let mut grads = Grads::zeros_like(&self.params);
        let back = self.backward(&cache, &dy, &mut grads);
        let act = cache.tap.activation.take();
        match (act, back.tap_gradient) {
            (Some(a), Some(g)) => Ok((a, g)),
            _ => Err(crate::LomaeError::Protocol(format!("block {layer} exposes no activation gradient"))),
        }
    }
}

/// Gradient of the mean absolute error restricted to `region`.
fn region_l1_grad(pred: &Slice, target: &Slice, r: Region) -> Slice {
    let n = (r.size * r.size) as f64;
    let mut g = Slice::zeros(pred.dim());
    for i in r.row..r.row + r.size {
        for j in r.col..r.col + r.size {
            let d = pred[[i, j]] - target[[i, j]];
            g[[i, j]] = if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            };
        }
    }
    g
}

/// Gradient-weighted activation map for the L1 loss on one region, upsampled
/// to the input grid by pixel replication.
pub fn mae_gradcam<P: LayerProbe + ?Sized>(
    net: &P,
    input: &Slice,
    target: &Slice,
    region: Region,
    layer: Option<usize>,
) -> Result<SaliencyMap> {
    let (h, w) = input.dim();
    ensure!(target.dim() == (h, w), Shape, "target {:?} vs input {:?}", target.dim(), (h, w));
    ensure!(region.size > 0, InvalidArgument, "empty target region");
    ensure!(
        region.row + region.size <= h && region.col + region.size <= w,
        InvalidArgument,
        "region {}x{} at ({}, {}) leaves the {h}x{w} image",
        region.size,
        region.size,
        region.row,
        region.col
    );
    let layer = layer.unwrap_or_else(|| net.default_layer());
    ensure!(layer < net.n_layers(), InvalidArgument, "layer {layer} out of range ({} layers)", net.n_layers());
    let (a, g) = net.probe(input, layer, &|pred| Ok(region_l1_grad(pred, target, region)))?;
    ensure!(
        h % a.h == 0 && w % a.w == 0,
        Shape,
        "{}x{} activation does not tile the {h}x{w} input",
        a.h,
        a.w
    );
    let tokens = a.tokens() as f64;
    let mut weights = vec![0.0; a.c];
    for t in 0..a.tokens() {
        for (k, wk) in weights.iter_mut().enumerate() {
            *wk += g.data[t * a.c + k];
        }
    }
    weights.iter_mut().for_each(|v| *v /= tokens);
    let (fy, fx) = (h / a.h, w / a.w);
    let values = Slice::from_shape_fn((h, w), |(i, j)| {
        let t = (i / fy) * a.w + j / fx;
        let s: f64 = weights.iter().enumerate().map(|(k, wk)| wk * a.data[t * a.c + k]).sum();
        s.max(0.0)
    });
    Ok(SaliencyMap {
        values,
        target: region,
        layer_tag: net.layer_tag(layer),
    })
}

/// Two-layer pointwise network `y = sum_k v_k * tanh(u_k * x + b_k)`; layer 0
/// is the pre-activation `A^k = u_k * x + b_k` evaluated on a pooled grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
    /// Pooling factor between the input and the activation grid.
    pub pool: usize,
}

impl ToyNet {
    fn activation(&self, x: &Slice) -> FeatureMap {
        let (h, w) = x.dim();
        let p = self.pool;
        let (ah, aw) = (h / p, w / p);
        let c = self.u.len();
        let mut a = FeatureMap::zeros(ah, aw, c);
        for i in 0..ah {
            for j in 0..aw {
                let mut m = 0.0;
                for di in 0..p {
                    for dj in 0..p {
                        m += x[[i * p + di, j * p + dj]];
                    }
                }
                m /= (p * p) as f64;
                for k in 0..c {
                    a.data[(i * aw + j) * c + k] = self.u[k] * m + self.b[k];
                }
            }
        }
        a
    }

    pub fn forward(&self, x: &Slice) -> Slice {
        let a = self.activation(x);
        let p = self.pool;
        Slice::from_shape_fn(x.dim(), |(i, j)| {
            let t = (i / p) * a.w + j / p;
            (0..a.c).map(|k| self.v[k] * a.data[t * a.c + k].tanh()).sum()
        })
    }
}

impl LayerProbe for ToyNet {
    fn n_layers(&self) -> usize {
        1
    }

    fn probe(&self, x: &Slice, layer: usize, dloss: &dyn Fn(&Slice) -> Result<Slice>) -> Result<(FeatureMap, FeatureMap)> {
        ensure!(layer == 0, InvalidArgument, "toy net has a single layer");
        let a = self.activation(x);
        let dy = dloss(&self.forward(x))?;
        let p = self.pool;
        let mut g = FeatureMap::zeros(a.h, a.w, a.c);
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let t = (i / p) * a.w + j / p;
                for k in 0..a.c {
                    let th = a.data[t * a.c + k].tanh();
                    g.data[t * a.c + k] += dy[[i, j]] * self.v[k] * (1.0 - th * th);
                }
            }
        }
        Ok((a, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ToyNet {
        ToyNet {
            u: vec![0.8, -1.2, 0.5],
            b: vec![0.1, 0.0, -0.3],
            v: vec![1.0, 0.7, -0.4],
            pool: 2,
        }
    }

    #[test]
    fn matches_hand_unrolled_chain_rule() {
        let net = toy();
        let x = Slice::from_shape_fn((4, 4), |(i, j)| 0.1 * (i as f64) - 0.05 * (j as f64) + 0.2);
        let y = Slice::zeros((4, 4));
        let r = Region { row: 0, col: 0, size: 2 };
        let s = mae_gradcam(&net, &x, &y, r, Some(0)).unwrap();
        // hand computation: only the top-left pooled cell sees gradient
        let m = (x[[0, 0]] + x[[0, 1]] + x[[1, 0]] + x[[1, 1]]) / 4.0;
        let a: Vec<f64> = (0..3).map(|k| net.u[k] * m + net.b[k]).collect();
        let yhat: f64 = (0..3).map(|k| net.v[k] * a[k].tanh()).sum();
        let sign = yhat.signum();
        // four pixels, each dL/dy = sign/4; one token of four gets it all
        let gk: Vec<f64> = (0..3).map(|k| sign * net.v[k] * (1.0 - a[k].tanh().powi(2)) / 4.0).collect();
        for i in 0..4 {
            for j in 0..4 {
                let cell = (i / 2) * 2 + j / 2;
                let mm = (x[[2 * (i / 2), 2 * (j / 2)]]
                    + x[[2 * (i / 2), 2 * (j / 2) + 1]]
                    + x[[2 * (i / 2) + 1, 2 * (j / 2)]]
                    + x[[2 * (i / 2) + 1, 2 * (j / 2) + 1]])
                    / 4.0;
                let expect: f64 = (0..3).map(|k| gk[k] * (net.u[k] * mm + net.b[k])).sum::<f64>().max(0.0);
                assert!((s.values[[i, j]] - expect).abs() < 1e-12, "cell {cell}");
            }
        }
    }

    #[test]
    fn zero_regional_error_gives_zero_map() {
        let net = toy();
        let x = Slice::from_shape_fn((4, 4), |(i, j)| (i * 4 + j) as f64 / 16.0);
        let y = net.forward(&x);
        let s = mae_gradcam(&net, &x, &y, Region { row: 2, col: 2, size: 2 }, None).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn region_must_fit() {
        let net = toy();
        let x = Slice::zeros((4, 4));
        let err = mae_gradcam(&net, &x, &x, Region { row: 3, col: 0, size: 2 }, None).unwrap_err();
        assert_eq!(err.category(), "argument");
    }

    #[test]
    fn model_saliency_is_nonnegative() {
        use crate::zoo::ModelConfig;
        let cfg = ModelConfig {
            depths: vec![2],
            embed_dim: 8,
            input_size: 16,
            window_size: 4,
            use_front_to_end_shortcut: false,
            ..ModelConfig::desk_swinir()
        };
        let m = Model::build(&cfg, 2).unwrap();
        let x = Slice::from_shape_fn((16, 16), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let s = mae_gradcam(&m, &x, &x, Region { row: 4, col: 4, size: 8 }, None).unwrap();
        assert!(s.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
        assert_eq!(s.layer_tag, "swinir_style/block1");
    }
}
