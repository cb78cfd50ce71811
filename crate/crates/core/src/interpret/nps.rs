use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::ensure;
use crate::{Result, Slice};

/// Noise power spectrum with the zero frequency at `(h / 2, w / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpsMap {
    pub values: Array2<f64>,
    /// Cycles per pixel along rows (vertical) and columns (horizontal).
    pub freq_y: Vec<f64>,
    pub freq_x: Vec<f64>,
    /// Sum over the vertical axis, one value per horizontal frequency.
    pub sum_over_y: Vec<f64>,
    /// Sum over the horizontal axis, one value per vertical frequency.
    pub sum_over_x: Vec<f64>,
}

fn shifted_freqs(n: usize) -> Vec<f64> {
    (0..n).map(|k| (k as f64 - (n / 2) as f64) / n as f64).collect()
}

/// In-place 2-D DFT.
fn fft2(data: &mut Array2<Complex<f64>>, planner: &mut FftPlanner<f64>) {
    let (h, w) = data.dim();
    let row = planner.plan_fft_forward(w);
    for mut r in data.rows_mut() {
        let mut buf: Vec<Complex<f64>> = r.to_vec();
        row.process(&mut buf);
        r.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
    let col = planner.plan_fft_forward(h);
    for mut c in data.columns_mut() {
        let mut buf: Vec<Complex<f64>> = c.to_vec();
        col.process(&mut buf);
        c.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
}

/// Ensemble mean of `|DFT(r - mean r)|^2 / (h w)` over residuals
/// `r = denoised - clean`.
pub fn nps_map(denoised: &[Slice], clean: &[Slice]) -> Result<NpsMap> {
    ensure!(!denoised.is_empty(), InvalidArgument, "no slices for NPS");
    ensure!(denoised.len() == clean.len(), InvalidArgument, "{} denoised vs {} clean", denoised.len(), clean.len());
    let (h, w) = denoised[0].dim();
    ensure!(
        denoised.iter().chain(clean).all(|s| s.dim() == (h, w)),
        Shape,
        "NPS slices must share one shape"
    );
    let mut planner = FftPlanner::new();
    let mut acc = Array2::<f64>::zeros((h, w));
    for (d, c) in denoised.iter().zip(clean) {
        let r = d - c;
        let mean = r.mean().unwrap_or(0.0);
        let mut z = r.mapv(|v| Complex::new(v - mean, 0.0));
        fft2(&mut z, &mut planner);
        acc.zip_mut_with(&z, |a, v| *a += v.norm_sqr());
    }
    let norm = (denoised.len() * h * w) as f64;
    let values = Array2::from_shape_fn((h, w), |(i, j)| acc[[(i + h - h / 2) % h, (j + w - w / 2) % w]] / norm);
    let sum_over_y = (0..w).map(|j| values.column(j).sum()).collect();
    let sum_over_x = (0..h).map(|i| values.row(i).sum()).collect();
    Ok(NpsMap {
        values,
        freq_y: shifted_freqs(h),
        freq_x: shifted_freqs(w),
        sum_over_y,
        sum_over_x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn zero_residual_gives_zero() {
        let x = Slice::from_elem((8, 8), 0.3);
        let n = nps_map(&[x.clone()], &[x]).unwrap();
        assert!(n.values.iter().all(|&v| v == 0.0));
        assert_eq!(n.freq_x[4], 0.0);
        assert_eq!(n.freq_x[0], -0.5);
    }

    #[test]
    fn sinusoid_lands_on_its_bins() {
        let (h, w, f) = (16, 32, 5);
        let r = Slice::from_shape_fn((h, w), |(_, j)| (std::f64::consts::TAU * f as f64 * j as f64 / w as f64).cos());
        let n = nps_map(&[r], &[Slice::zeros((h, w))]).unwrap();
        let total: f64 = n.values.sum();
        let peak = n.values[[h / 2, w / 2 + f]] + n.values[[h / 2, w / 2 - f]];
        assert!((peak / total - 1.0).abs() < 1e-12);
        assert!((n.freq_x[w / 2 + f] - f as f64 / w as f64).abs() < 1e-15);
    }

    #[test]
    fn white_noise_is_roughly_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zs: Vec<Slice> = (0..100)
            .map(|_| Slice::from_shape_fn((16, 16), |_| StandardNormal.sample(&mut rng)))
            .collect();
        let zero = vec![Slice::zeros((16, 16)); 100];
        let n = nps_map(&zs, &zero).unwrap();
        // the DC bin is removed by mean subtraction
        let rest: Vec<f64> = n
            .values
            .indexed_iter()
            .filter(|&((i, j), _)| (i, j) != (8, 8))
            .map(|(_, &v)| v)
            .collect();
        let max = rest.iter().cloned().fold(f64::MIN, f64::max);
        let min = rest.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 3.0, "{max} / {min}");
    }

    #[test]
    fn sign_flip_and_point_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = Slice::from_shape_fn((8, 8), |_| StandardNormal.sample(&mut rng));
        let z = Slice::zeros((8, 8));
        let a = nps_map(&[r.clone()], &[z.clone()]).unwrap();
        let b = nps_map(&[-r], &[z]).unwrap();
        assert_eq!(a.values, b.values);
        for i in 1..8 {
            for j in 1..8 {
                let (si, sj) = (8 - i, 8 - j);
                assert!((a.values[[i, j]] - a.values[[si, sj]]).abs() < 1e-12);
            }
        }
    }
}
