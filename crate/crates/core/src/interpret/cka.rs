use ndarray::Array2;

use crate::error::ensure;
use crate::nn::FeatureMap;
use crate::zoo::Model;
use crate::{LomaeError, Result, Slice};

/// Doubly centered copy `H K H` with `H = I - 11^T / m`.
fn center(k: &Array2<f64>) -> Array2<f64> {
    let m = k.nrows();
    let row_means: Vec<f64> = (0..m).map(|i| k.row(i).sum() / m as f64).collect();
    let col_means: Vec<f64> = (0..m).map(|j| k.column(j).sum() / m as f64).collect();
    let grand = row_means.iter().sum::<f64>() / m as f64;
    Array2::from_shape_fn((m, m), |(i, j)| k[[i, j]] - row_means[i] - col_means[j] + grand)
}

/// Empirical HSIC of two Gram matrices: `vec(K') . vec(L') / (m - 1)^2`.
pub fn hsic(k: &Array2<f64>, l: &Array2<f64>) -> Result<f64> {
    ensure!(k.is_square() && l.is_square(), Shape, "Gram matrices must be square");
    ensure!(k.dim() == l.dim(), Shape, "Gram sizes differ: {:?} vs {:?}", k.dim(), l.dim());
    let m = k.nrows();
    ensure!(m >= 2, InvalidArgument, "HSIC needs at least 2 samples, got {m}");
    let (kc, lc) = (center(k), center(l));
    let dot: f64 = kc.iter().zip(lc.iter()).map(|(a, b)| a * b).sum();
    Ok(dot / ((m - 1) * (m - 1)) as f64)
}

fn gram(x: &Array2<f64>) -> Array2<f64> {
    x.dot(&x.t())
}

/// Linear CKA between two feature matrices with one row per example.
pub fn cka(x1: &Array2<f64>, x2: &Array2<f64>) -> Result<f64> {
    ensure!(
        x1.nrows() == x2.nrows(),
        Shape,
        "feature matrices have {} and {} rows",
        x1.nrows(),
        x2.nrows()
    );
    let (k, l) = (gram(x1), gram(x2));
    let kl = hsic(&k, &l)?;
    let kk = hsic(&k, &k)?;
    let ll = hsic(&l, &l)?;
    let scale = |g: &Array2<f64>| g.iter().map(|v| v * v).sum::<f64>() / ((g.nrows() - 1).pow(2)) as f64;
    if kk <= 1e-12 * scale(&k) || ll <= 1e-12 * scale(&l) || kk <= 0.0 || ll <= 0.0 {
        return Err(LomaeError::Degenerate("features are constant across examples".into()));
    }
    Ok((kl / (kk * ll).sqrt()).clamp(0.0, 1.0))
}

/// Symmetric CKA matrix across feature sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CkaMatrix {
    pub values: Array2<f64>,
    pub labels: Vec<String>,
}

impl CkaMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label");
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            s.push_str(l);
            for j in 0..self.labels.len() {
                s.push_str(&format!(",{:.6}", self.values[[i, j]]));
            }
            s.push('\n');
        }
        s
    }
}

fn flatten(fs: &[FeatureMap]) -> Result<Array2<f64>> {
    ensure!(!fs.is_empty(), InvalidArgument, "no feature maps");
    let d = fs[0].data.len();
    ensure!(fs.iter().all(|f| f.data.len() == d), Shape, "feature maps differ in size");
    Ok(Array2::from_shape_fn((fs.len(), d), |(i, j)| fs[i].data[j]))
}

/// CKA between last-layer features of the same slices seen at different
/// doses. Each example row is one slice's flattened feature map.
pub fn cka_across_doses(model: &Model, slices_per_dose: &[Vec<Slice>], labels: &[String]) -> Result<CkaMatrix> {
    ensure!(
        slices_per_dose.len() == labels.len(),
        InvalidArgument,
        "{} dose sets but {} labels",
        slices_per_dose.len(),
        labels.len()
    );
    let n = slices_per_dose.first().map_or(0, Vec::len);
    ensure!(
        slices_per_dose.iter().all(|s| s.len() == n),
        InvalidArgument,
        "every dose needs the same slices"
    );
    let feats: Vec<Array2<f64>> = slices_per_dose
        .iter()
        .map(|set| {
            let fs = set.iter().map(|x| model.features(x)).collect::<Result<Vec<_>>>()?;
            flatten(&fs)
        })
        .collect::<Result<_>>()?;
    let d = feats.len();
    let mut values = Array2::zeros((d, d));
    for i in 0..d {
        values[[i, i]] = 1.0;
        for j in i + 1..d {
            let c = cka(&feats[i], &feats[j])?;
            values[[i, j]] = c;
            values[[j, i]] = c;
        }
    }
    Ok(CkaMatrix {
        values,
        labels: labels.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Element loops straight from the definitions.
    fn brute_hsic(k: &Array2<f64>, l: &Array2<f64>) -> f64 {
        let m = k.nrows();
        let h = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 } - 1.0 / m as f64;
        let prod = |a: &Array2<f64>| {
            let mut out = Array2::<f64>::zeros((m, m));
            for i in 0..m {
                for j in 0..m {
                    for p in 0..m {
                        for q in 0..m {
                            out[[i, j]] += h(i, p) * a[[p, q]] * h(q, j);
                        }
                    }
                }
            }
            out
        };
        let (kc, lc) = (prod(k), prod(l));
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += kc[[i, j]] * lc[[i, j]];
            }
        }
        s / ((m - 1) * (m - 1)) as f64
    }

    #[test]
    fn agrees_with_brute_force() {
        let x1 = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.25]];
        let x2 = array![[0.3, 1.0], [2.0, 2.0], [-1.0, 0.5]];
        let (k, l) = (gram(&x1), gram(&x2));
        assert!((hsic(&k, &l).unwrap() - brute_hsic(&k, &l)).abs() < 1e-10);
        let expect = brute_hsic(&k, &l) / (brute_hsic(&k, &k) * brute_hsic(&l, &l)).sqrt();
        assert!((cka(&x1, &x2).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn constant_features_are_degenerate() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let y = array![[0.3, 1.0], [2.0, 2.0], [-1.0, 0.5]];
        assert_eq!(hsic(&gram(&x), &gram(&y)).unwrap(), 0.0);
        assert_eq!(cka(&x, &y).unwrap_err().category(), "degenerate");
    }

    #[test]
    fn hsic_errors() {
        let a = Array2::<f64>::zeros((3, 3));
        assert!(hsic(&a, &Array2::zeros((2, 2))).is_err());
        assert!(hsic(&Array2::zeros((1, 1)), &Array2::zeros((1, 1))).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = CkaMatrix {
            values: array![[1.0, 0.5], [0.5, 1.0]],
            labels: vec!["a".into(), "b".into()],
        };
        assert_eq!(m.to_csv(), "label,a,b\na,1.000000,0.500000\nb,0.500000,1.000000\n");
    }
}
