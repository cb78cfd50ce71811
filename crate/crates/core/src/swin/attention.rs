use rand::Rng;

use super::grid::{effective_window, region_labels, window_index};
use crate::nn::{gemm, Grads, Init, Linear, ParamId, ParamStore};
use crate::nn::FeatureMap;

/// Window multi-head self-attention with a learned relative-position bias.
///
/// Attention runs on the windows of the map rolled by `(-shift, -shift)`; since
/// the q/k/v and output projections act per token they are applied on the
/// unrolled map and only the window gather follows the roll.
#[derive(Debug, Clone)]
pub struct WindowAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub bias_table: ParamId,
    pub dim: usize,
    pub heads: usize,
    pub window: usize,
}

/// Window geometry resolved for one concrete grid.
#[derive(Debug, Clone)]
pub struct Layout {
    pub ws: usize,
    pub shift: usize,
    /// Source token of each windowed position.
    pub index: Vec<usize>,
    pub labels: Vec<u8>,
    /// Bias-table row for each in-window pair `(i, j)`.
    pub rel: Vec<usize>,
}

impl Layout {
    pub fn new(h: usize, w: usize, window: usize, shift: usize) -> Self {
        let (ws, shift) = effective_window(h, w, window, shift);
        let n = ws * ws;
        let span = 2 * window - 1;
        let mut rel = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let dy = (i / ws) as isize - (j / ws) as isize + window as isize - 1;
                let dx = (i % ws) as isize - (j % ws) as isize + window as isize - 1;
                rel.push(dy as usize * span + dx as usize);
            }
        }
        Self {
            ws,
            shift,
            index: window_index(h, w, ws, shift),
            labels: region_labels(h, w, ws, shift),
            rel,
        }
    }

    pub fn tokens_per_window(&self) -> usize {
        self.ws * self.ws
    }

    pub fn n_windows(&self) -> usize {
        self.index.len() / self.tokens_per_window()
    }

    /// Whether windowed positions `a` and `b` (same window) are masked apart.
    pub fn masked(&self, a: usize, b: usize) -> bool {
        self.labels[a] != self.labels[b]
    }
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: FeatureMap,
    qkv: FeatureMap,
    ctx: FeatureMap,
    /// `[window][head][n][n]` attention probabilities.
    pub attn: Vec<f64>,
    pub layout: Layout,
}

impl WindowAttention {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, name: &str, dim: usize, heads: usize, window: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        let span = 2 * window - 1;
        Self {
            qkv: Linear::new(ps, &format!("{name}.qkv"), dim, 3 * dim, true, rng),
            proj: Linear::new(ps, &format!("{name}.proj"), dim, dim, true, rng),
            bias_table: ps.add(
                format!("{name}.relative_position_bias_table"),
                &[span * span, heads],
                Init::TruncNormal(0.02),
                rng,
            ),
            dim,
            heads,
            window,
        }
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Gathers `[n, dk]` blocks of q, k and v for one window and head.
    fn gather(&self, qkv: &FeatureMap, idx: &[usize], head: usize, part: usize, out: &mut [f64]) {
        let dk = self.head_dim();
        let off = part * self.dim + head * dk;
        for (t, &src) in idx.iter().enumerate() {
            let base = src * 3 * self.dim + off;
            out[t * dk..(t + 1) * dk].copy_from_slice(&qkv.data[base..base + dk]);
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &FeatureMap, shift: usize) -> (FeatureMap, AttentionCache) {
        let layout = Layout::new(x.h, x.w, self.window, shift);
        let qkv = self.qkv.forward(ps, x);
        let n = layout.tokens_per_window();
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let bias = ps.get(self.bias_table);
        let mut ctx = FeatureMap::zeros(x.h, x.w, self.dim);
        let mut attn = vec![0.0; layout.n_windows() * self.heads * n * n];
        let (mut q, mut k, mut v) = (vec![0.0; n * dk], vec![0.0; n * dk], vec![0.0; n * dk]);
        let mut out = vec![0.0; n * dk];
        for win in 0..layout.n_windows() {
            let idx = &layout.index[win * n..(win + 1) * n];
            let labels = &layout.labels[win * n..(win + 1) * n];
            for h in 0..self.heads {
                self.gather(&qkv, idx, h, 0, &mut q);
                self.gather(&qkv, idx, h, 1, &mut k);
                self.gather(&qkv, idx, h, 2, &mut v);
                let a = &mut attn[(win * self.heads + h) * n * n..(win * self.heads + h + 1) * n * n];
                gemm(n, dk, n, &q, false, &k, true, a, 0.0);
                for i in 0..n {
                    let row = &mut a[i * n..(i + 1) * n];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..n {
                        if labels[i] != labels[j] {
                            continue;
                        }
                        row[j] = row[j] * scale + bias[layout.rel[i * n + j] * self.heads + h];
                        max = max.max(row[j]);
                    }
                    let mut sum = 0.0;
                    for j in 0..n {
                        if labels[i] != labels[j] {
                            row[j] = 0.0;
                        } else {
                            row[j] = (row[j] - max).exp();
                            sum += row[j];
                        }
                    }
                    for r in row.iter_mut() {
                        *r /= sum;
                    }
                }
                gemm(n, n, dk, a, false, &v, false, &mut out, 0.0);
                for (t, &dst) in idx.iter().enumerate() {
                    let base = dst * self.dim + h * dk;
                    ctx.data[base..base + dk].copy_from_slice(&out[t * dk..(t + 1) * dk]);
                }
            }
        }
        let y = self.proj.forward(ps, &ctx);
        (
            y,
            AttentionCache {
                x: x.clone(),
                qkv,
                ctx,
                attn,
                layout,
            },
        )
    }

    pub fn backward(&self, ps: &ParamStore, cache: &AttentionCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let layout = &cache.layout;
        let dctx = self.proj.backward(ps, &cache.ctx, dy, grads);
        let n = layout.tokens_per_window();
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut dqkv = FeatureMap::zeros(dy.h, dy.w, 3 * self.dim);
        let (mut q, mut k, mut v) = (vec![0.0; n * dk], vec![0.0; n * dk], vec![0.0; n * dk]);
        let mut dout = vec![0.0; n * dk];
        let mut da = vec![0.0; n * n];
        let (mut dq, mut dkk, mut dv) = (vec![0.0; n * dk], vec![0.0; n * dk], vec![0.0; n * dk]);
        let mut dbias = vec![0.0; grads.get(self.bias_table).len()];
        for win in 0..layout.n_windows() {
            let idx = &layout.index[win * n..(win + 1) * n];
            for h in 0..self.heads {
                let a = &cache.attn[(win * self.heads + h) * n * n..(win * self.heads + h + 1) * n * n];
                self.gather(&cache.qkv, idx, h, 0, &mut q);
                self.gather(&cache.qkv, idx, h, 1, &mut k);
                self.gather(&cache.qkv, idx, h, 2, &mut v);
                for (t, &src) in idx.iter().enumerate() {
                    let base = src * self.dim + h * dk;
                    dout[t * dk..(t + 1) * dk].copy_from_slice(&dctx.data[base..base + dk]);
                }
                gemm(n, dk, n, &dout, false, &v, true, &mut da, 0.0);
                gemm(n, n, dk, a, true, &dout, false, &mut dv, 0.0);
                for i in 0..n {
                    let ar = &a[i * n..(i + 1) * n];
                    let dr = &mut da[i * n..(i + 1) * n];
                    let dot: f64 = ar.iter().zip(dr.iter()).map(|(p, g)| p * g).sum();
                    for j in 0..n {
                        dr[j] = ar[j] * (dr[j] - dot);
                        dbias[layout.rel[i * n + j] * self.heads + h] += dr[j];
                    }
                }
                gemm(n, n, dk, &da, false, &k, false, &mut dq, 0.0);
                gemm(n, n, dk, &da, true, &q, false, &mut dkk, 0.0);
                for (t, &dst) in idx.iter().enumerate() {
                    let base = dst * 3 * self.dim + h * dk;
                    for e in 0..dk {
                        dqkv.data[base + e] += dq[t * dk + e] * scale;
                        dqkv.data[base + self.dim + e] += dkk[t * dk + e] * scale;
                        dqkv.data[base + 2 * self.dim + e] += dv[t * dk + e];
                    }
                }
            }
        }
        for (g, d) in grads.get_mut(self.bias_table).iter_mut().zip(&dbias) {
            *g += d;
        }
        self.qkv.backward(ps, &cache.x, &dqkv, grads)
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
    fn rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamStore::new();
        let att = WindowAttention::new(&mut ps, "a", 8, 2, 4, &mut rng);
        let x = random_map(&mut rng, 8, 8, 8);
        for shift in [0, 2] {
            let (_, cache) = att.forward(&ps, &x, shift);
            for row in cache.attn.chunks(16) {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn single_token_window_returns_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ps = ParamStore::new();
        let att = WindowAttention::new(&mut ps, "a", 4, 1, 1, &mut rng);
        let x = random_map(&mut rng, 2, 2, 4);
        let (y, cache) = att.forward(&ps, &x, 0);
        assert!(cache.attn.iter().all(|&p| p == 1.0));
        let qkv = att.qkv.forward(&ps, &x);
        let mut ctx = FeatureMap::zeros(2, 2, 4);
        for t in 0..4 {
            ctx.data[t * 4..t * 4 + 4].copy_from_slice(&qkv.data[t * 12 + 8..t * 12 + 12]);
        }
        let expect = att.proj.forward(&ps, &ctx);
        for (a, b) in y.data.iter().zip(&expect.data) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_tokens_attend_uniformly_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamStore::new();
        let att = WindowAttention::new(&mut ps, "a", 6, 3, 4, &mut rng);
        ps.get_mut(att.bias_table).iter_mut().for_each(|b| *b = 0.0);
        let token = [0.3, -0.2, 0.9, 0.1, -0.7, 0.4];
        let x = FeatureMap::from_vec(4, 4, 6, token.iter().copied().cycle().take(96).collect());
        let (_, cache) = att.forward(&ps, &x, 0);
        for &p in &cache.attn {
            assert!((p - 1.0 / 16.0).abs() < 1e-14);
        }
    }
}
