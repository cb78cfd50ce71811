//! Dense building blocks with hand-written backward passes.
//!
//! Every layer is stateless apart from the [`ParamId`]s it owns; `forward`
//! returns the activations `backward` needs, and `backward` accumulates
//! parameter gradients into a [`Grads`] buffer and returns the input gradient.

use rand::Rng;

use super::params::{Grads, Init, ParamId, ParamStore};
use super::tensor::FeatureMap;

/// `c = op(a) * op(b) + beta * c` for row-major dense matrices, with `op(a)`
/// of shape `m x k` and `op(b)` of shape `k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], trans_a: bool, b: &[f64], trans_b: bool, c: &mut [f64], beta: f64) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // row-major buffers whose lengths are checked in debug builds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Per-token affine map `y = x W + b` with `W` stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool, rng: &mut R) -> Self {
        let weight = ps.add(format!("{name}.weight"), &[in_dim, out_dim], Init::TruncNormal(0.02), rng);
        let bias = bias.then(|| ps.add(format!("{name}.bias"), &[out_dim], Init::Zeros, rng));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward_rows(&self, ps: &ParamStore, x: &[f64], rows: usize) -> Vec<f64> {
        let mut y = vec![0.0; rows * self.out_dim];
        if let Some(b) = self.bias {
            let b = ps.get(b);
            for row in y.chunks_exact_mut(self.out_dim) {
                row.copy_from_slice(b);
            }
        }
        gemm(rows, self.in_dim, self.out_dim, x, false, ps.get(self.weight), false, &mut y, 1.0);
        y
    }

    pub fn backward_rows(&self, ps: &ParamStore, x: &[f64], dy: &[f64], rows: usize, grads: &mut Grads) -> Vec<f64> {
        gemm(self.in_dim, rows, self.out_dim, x, true, dy, false, grads.get_mut(self.weight), 1.0);
        if let Some(b) = self.bias {
            let gb = grads.get_mut(b);
            for row in dy.chunks_exact(self.out_dim) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let mut dx = vec![0.0; rows * self.in_dim];
        gemm(rows, self.out_dim, self.in_dim, dy, false, ps.get(self.weight), true, &mut dx, 0.0);
        dx
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> FeatureMap {
        debug_assert_eq!(x.c, self.in_dim);
        FeatureMap::from_vec(x.h, x.w, self.out_dim, self.forward_rows(ps, &x.data, x.tokens()))
    }

    pub fn backward(&self, ps: &ParamStore, x: &FeatureMap, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        FeatureMap::from_vec(x.h, x.w, self.in_dim, self.backward_rows(ps, &x.data, &dy.data, x.tokens(), grads))
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Self {
        Self {
            gamma: ps.add(format!("{name}.weight"), &[dim], Init::Ones, rng),
            beta: ps.add(format!("{name}.bias"), &[dim], Init::Zeros, rng),
            dim,
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> (FeatureMap, LayerNormCache) {
        let d = self.dim;
        let gamma = ps.get(self.gamma);
        let beta = ps.get(self.beta);
        let rows = x.tokens();
        let mut y = vec![0.0; rows * d];
        let mut xhat = vec![0.0; rows * d];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let xr = &x.data[r * d..(r + 1) * d];
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for k in 0..d {
                let xh = (xr[k] - mean) * rs;
                xhat[r * d + k] = xh;
                y[r * d + k] = xh * gamma[k] + beta[k];
            }
        }
        (FeatureMap::from_vec(x.h, x.w, d, y), LayerNormCache { xhat, rstd })
    }

    pub fn backward(&self, ps: &ParamStore, cache: &LayerNormCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let d = self.dim;
        let rows = dy.tokens();
        let gamma = ps.get(self.gamma);
        {
            let gg = grads.get_mut(self.gamma);
            for r in 0..rows {
                for k in 0..d {
                    gg[k] += dy.data[r * d + k] * cache.xhat[r * d + k];
                }
            }
        }
        {
            let gb = grads.get_mut(self.beta);
            for r in 0..rows {
                for k in 0..d {
                    gb[k] += dy.data[r * d + k];
                }
            }
        }
        let mut dx = vec![0.0; rows * d];
        let mut dxhat = vec![0.0; d];
        for r in 0..rows {
            let mut mean_dxhat = 0.0;
            let mut mean_dxhat_xhat = 0.0;
            for k in 0..d {
                let v = dy.data[r * d + k] * gamma[k];
                dxhat[k] = v;
                mean_dxhat += v;
                mean_dxhat_xhat += v * cache.xhat[r * d + k];
            }
            mean_dxhat /= d as f64;
            mean_dxhat_xhat /= d as f64;
            for k in 0..d {
                dx[r * d + k] = cache.rstd[r] * (dxhat[k] - mean_dxhat - cache.xhat[r * d + k] * mean_dxhat_xhat);
            }
        }
        FeatureMap::from_vec(dy.h, dy.w, d, dx)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh-approximated GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// Two-layer perceptron `fc2(gelu(fc1(x)))`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    pre: FeatureMap,
    act: FeatureMap,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fc1: Linear::new(ps, &format!("{name}.fc1"), dim, hidden, true, rng),
            fc2: Linear::new(ps, &format!("{name}.fc2"), hidden, dim, true, rng),
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> (FeatureMap, MlpCache) {
        let pre = self.fc1.forward(ps, x);
        let mut act = pre.clone();
        act.data.iter_mut().for_each(|v| *v = gelu(*v));
        let y = self.fc2.forward(ps, &act);
        (y, MlpCache { pre, act })
    }

    pub fn backward(&self, ps: &ParamStore, x: &FeatureMap, cache: &MlpCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let mut dact = self.fc2.backward(ps, &cache.act, dy, grads);
        for (g, p) in dact.data.iter_mut().zip(&cache.pre.data) {
            *g *= gelu_grad(*p);
        }
        self.fc1.backward(ps, x, &dact, grads)
    }
}

/// 3x3 convolution, stride 1, zero padding 1, channels-last, via im2col.
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_c: usize,
    pub out_c: usize,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Vec<f64>,
}

impl Conv3x3 {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, name: &str, in_c: usize, out_c: usize, rng: &mut R) -> Self {
        let fan_in = (9 * in_c) as f64;
        let bound = 1.0 / fan_in.sqrt();
        Self {
            weight: ps.add(format!("{name}.weight"), &[9 * in_c, out_c], Init::Uniform(bound), rng),
            bias: ps.add(format!("{name}.bias"), &[out_c], Init::Uniform(bound), rng),
            in_c,
            out_c,
        }
    }

    fn im2col(&self, x: &FeatureMap) -> Vec<f64> {
        let (h, w, c) = (x.h, x.w, x.c);
        let k = 9 * c;
        let mut cols = vec![0.0; h * w * k];
        for i in 0..h {
            for j in 0..w {
                let row = &mut cols[(i * w + j) * k..(i * w + j + 1) * k];
                for ky in 0..3 {
                    let yi = i as isize + ky as isize - 1;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let xj = j as isize + kx as isize - 1;
                        if xj < 0 || xj >= w as isize {
                            continue;
                        }
                        let src = (yi as usize * w + xj as usize) * c;
                        let dst = (ky * 3 + kx) * c;
                        row[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap) -> (FeatureMap, ConvCache) {
        debug_assert_eq!(x.c, self.in_c);
        let cols = self.im2col(x);
        let rows = x.tokens();
        let mut y = vec![0.0; rows * self.out_c];
        let b = ps.get(self.bias);
        for row in y.chunks_exact_mut(self.out_c) {
            row.copy_from_slice(b);
        }
        gemm(rows, 9 * self.in_c, self.out_c, &cols, false, ps.get(self.weight), false, &mut y, 1.0);
        (FeatureMap::from_vec(x.h, x.w, self.out_c, y), ConvCache { cols })
    }

    pub fn backward(&self, ps: &ParamStore, cache: &ConvCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let rows = dy.tokens();
        let k = 9 * self.in_c;
        gemm(k, rows, self.out_c, &cache.cols, true, &dy.data, false, grads.get_mut(self.weight), 1.0);
        {
            let gb = grads.get_mut(self.bias);
            for row in dy.data.chunks_exact(self.out_c) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let mut dcols = vec![0.0; rows * k];
        gemm(rows, self.out_c, k, &dy.data, false, ps.get(self.weight), true, &mut dcols, 0.0);
        let (h, w, c) = (dy.h, dy.w, self.in_c);
        let mut dx = FeatureMap::zeros(h, w, c);
        for i in 0..h {
            for j in 0..w {
                let row = &dcols[(i * w + j) * k..(i * w + j + 1) * k];
                for ky in 0..3 {
                    let yi = i as isize + ky as isize - 1;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let xj = j as isize + kx as isize - 1;
                        if xj < 0 || xj >= w as isize {
                            continue;
                        }
                        let dst = (yi as usize * w + xj as usize) * c;
                        let src = (ky * 3 + kx) * c;
                        for ch in 0..c {
                            dx.data[dst + ch] += row[src + ch];
                        }
                    }
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_matches_naive_in_all_transpose_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let expect = naive_matmul(&a, &b, m, k, n);
        let at = transpose(&a, m, k);
        let bt = transpose(&b, k, n);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let aa = if ta { &at } else { &a };
            let bb = if tb { &bt } else { &b };
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, aa, ta, bb, tb, &mut c, 0.0);
            for (x, y) in c.iter().zip(&expect) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamStore::new();
        let conv = Conv3x3::new(&mut ps, "c", 2, 3, &mut rng);
        let x = FeatureMap::from_vec(4, 5, 2, (0..40).map(|_| rng.random_range(-1.0..1.0)).collect());
        let (y, _) = conv.forward(&ps, &x);
        let w = ps.get(conv.weight);
        let b = ps.get(conv.bias);
        for i in 0..4 {
            for j in 0..5 {
                for o in 0..3 {
                    let mut acc = b[o];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (yi, xj) = (i as isize + ky - 1, j as isize + kx - 1);
                            if yi < 0 || yi >= 4 || xj < 0 || xj >= 5 {
                                continue;
                            }
                            for c in 0..2 {
                                let widx = ((ky * 3 + kx) as usize * 2 + c) * 3 + o;
                                acc += w[widx] * x.data[(yi as usize * 5 + xj as usize) * 2 + c];
                            }
                        }
                    }
                    assert!((acc - y.data[(i * 5 + j) * 3 + o]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ps = ParamStore::new();
        let ln = LayerNorm::new(&mut ps, "ln", 6, &mut rng);
        let x = FeatureMap::from_vec(1, 3, 6, (0..18).map(|i| (i * i) as f64 * 0.1).collect());
        let (y, _) = ln.forward(&ps, &x);
        for row in y.data.chunks(6) {
            let mean = row.iter().sum::<f64>() / 6.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
