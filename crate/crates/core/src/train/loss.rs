use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::{Result, Slice};

/// Local-window SSIM settings for images in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl SsimParams {
    fn kernel(&self) -> Vec<f64> {
        let r = (self.window as f64 - 1.0) / 2.0;
        let g: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0,
            InvalidArgument,
            "loss weights need alpha, beta >= 0 with a positive sum (got {}, {})",
            self.alpha,
            self.beta
        );
        Ok(())
    }
}

fn same_shape(a: &Slice, b: &Slice) -> Result<()> {
    ensure!(a.dim() == b.dim(), Shape, "{:?} vs {:?}", a.dim(), b.dim());
    Ok(())
}

/// Mean absolute difference.
pub fn loss_l1(pred: &Slice, target: &Slice) -> Result<f64> {
    same_shape(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
}

pub fn loss_l1_grad(pred: &Slice, target: &Slice) -> Result<(f64, Slice)> {
    let l = loss_l1(pred, target)?;
    let n = pred.len() as f64;
    let g = ndarray::Zip::from(pred).and(target).map_collect(|&p, &t| {
        let d = p - t;
        if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    });
    Ok((l, g))
}

/// Separable valid-mode filter.
fn filter_valid(x: &Slice, k: &[f64]) -> Slice {
    let (h, w) = x.dim();
    let m = k.len();
    let (oh, ow) = (h + 1 - m, w + 1 - m);
    let mut tmp = Slice::zeros((h, ow));
    for i in 0..h {
        for j in 0..ow {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                acc += kv * x[[i, j + t]];
            }
            tmp[[i, j]] = acc;
        }
    }
    let mut out = Slice::zeros((oh, ow));
    for i in 0..oh {
        for j in 0..ow {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                acc += kv * tmp[[i + t, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: spreads a valid-size map back to `(h, w)`.
fn filter_valid_adjoint(g: &Slice, k: &[f64], h: usize, w: usize) -> Slice {
    let (oh, ow) = g.dim();
    let mut tmp = Slice::zeros((h, ow));
    for i in 0..oh {
        for j in 0..ow {
            for (t, kv) in k.iter().enumerate() {
                tmp[[i + t, j]] += kv * g[[i, j]];
            }
        }
    }
    let mut out = Slice::zeros((h, w));
    for i in 0..h {
        for j in 0..ow {
            for (t, kv) in k.iter().enumerate() {
                out[[i, j + t]] += kv * tmp[[i, j]];
            }
        }
    }
    out
}

struct Moments {
    mx: Slice,
    my: Slice,
    exx: Slice,
    eyy: Slice,
    exy: Slice,
}

fn moments(x: &Slice, y: &Slice, k: &[f64]) -> Moments {
    Moments {
        mx: filter_valid(x, k),
        my: filter_valid(y, k),
        exx: filter_valid(&(x * x), k),
        eyy: filter_valid(&(y * y), k),
        exy: filter_valid(&(x * y), k),
    }
}

/// Variances and the covariance go through the same expression so that
/// identical inputs give a ratio of exactly one.
fn ssim_terms(m: &Moments, p: &SsimParams, i: usize, j: usize) -> (f64, f64, f64, f64) {
    let (mx, my) = (m.mx[[i, j]], m.my[[i, j]]);
    let sxx = m.exx[[i, j]] - mx * mx;
    let syy = m.eyy[[i, j]] - my * my;
    let sxy = m.exy[[i, j]] - mx * my;
    let a1 = 2.0 * (mx * my) + p.c1;
    let b1 = mx * mx + my * my + p.c1;
    let a2 = 2.0 * sxy + p.c2;
    let b2 = sxx + syy + p.c2;
    (a1, a2, b1, b2)
}

fn check_ssim_input(pred: &Slice, target: &Slice, p: &SsimParams) -> Result<()> {
    same_shape(pred, target)?;
    ensure!(p.c1 > 0.0 && p.c2 > 0.0, InvalidArgument, "c1 and c2 must be positive");
    ensure!(p.window > 0 && p.sigma > 0.0, InvalidArgument, "window and sigma must be positive");
    let (h, w) = pred.dim();
    ensure!(h >= p.window && w >= p.window, Shape, "{h}x{w} image smaller than the {} window", p.window);
    Ok(())
}

/// Mean local SSIM over all valid window positions.
pub fn loss_ssim(pred: &Slice, target: &Slice, params: &SsimParams) -> Result<f64> {
    check_ssim_input(pred, target, params)?;
    let k = params.kernel();
    let m = moments(pred, target, &k);
    let (oh, ow) = m.mx.dim();
    let mut acc = 0.0;
    for i in 0..oh {
        for j in 0..ow {
            let (a1, a2, b1, b2) = ssim_terms(&m, params, i, j);
            acc += (a1 * a2) / (b1 * b2);
        }
    }
    Ok(acc / (oh * ow) as f64)
}

/// SSIM and its gradient with respect to `pred`.
pub fn loss_ssim_grad(pred: &Slice, target: &Slice, params: &SsimParams) -> Result<(f64, Slice)> {
    check_ssim_input(pred, target, params)?;
    let k = params.kernel();
    let m = moments(pred, target, &k);
    let (oh, ow) = m.mx.dim();
    let n = (oh * ow) as f64;
    let mut g_mu = Slice::zeros((oh, ow));
    let mut g_exx = Slice::zeros((oh, ow));
    let mut g_exy = Slice::zeros((oh, ow));
    let mut acc = 0.0;
    for i in 0..oh {
        for j in 0..ow {
            let (a1, a2, b1, b2) = ssim_terms(&m, params, i, j);
            let s = (a1 * a2) / (b1 * b2);
            acc += s;
            let (mx, my) = (m.mx[[i, j]], m.my[[i, j]]);
            g_mu[[i, j]] = s * (2.0 * my / a1 - 2.0 * mx / b1 - 2.0 * my / a2 + 2.0 * mx / b2) / n;
            g_exx[[i, j]] = -s / b2 / n;
            g_exy[[i, j]] = 2.0 * s / a2 / n;
        }
    }
    let (h, w) = pred.dim();
    let d_mu = filter_valid_adjoint(&g_mu, &k, h, w);
    let d_exx = filter_valid_adjoint(&g_exx, &k, h, w);
    let d_exy = filter_valid_adjoint(&g_exy, &k, h, w);
    let grad = ndarray::Zip::from(&d_mu)
        .and(&d_exx)
        .and(&d_exy)
        .and(pred)
        .and(target)
        .map_collect(|&a, &b, &c, &x, &y| a + 2.0 * x * b + y * c);
    Ok((acc / n, grad))
}

/// `alpha * L1 + beta * (1 - SSIM)`.
pub fn loss_combined(pred: &Slice, target: &Slice, weights: &LossWeights, params: &SsimParams) -> Result<f64> {
    weights.validate()?;
    let l1 = loss_l1(pred, target)?;
    if weights.beta == 0.0 {
        return Ok(weights.alpha * l1);
    }
    let s = loss_ssim(pred, target, params)?;
    Ok(weights.alpha * l1 + weights.beta * (1.0 - s))
}

pub fn loss_combined_grad(pred: &Slice, target: &Slice, weights: &LossWeights, params: &SsimParams) -> Result<(f64, Slice)> {
    weights.validate()?;
    let (l1, mut g) = loss_l1_grad(pred, target)?;
    g *= weights.alpha;
    if weights.beta == 0.0 {
        return Ok((weights.alpha * l1, g));
    }
    let (s, gs) = loss_ssim_grad(pred, target, params)?;
    g.scaled_add(-weights.beta, &gs);
    Ok((weights.alpha * l1 + weights.beta * (1.0 - s), g))
}
