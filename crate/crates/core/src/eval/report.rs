use serde::{Deserialize, Serialize};

use super::metrics::{reference, rmse_metric, ssim_metric, RmseUnit};
use crate::data::PairedPool;
use crate::error::ensure;
use crate::zoo::Model;
use crate::{LomaeError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub patient_id: String,
    pub slice_index: usize,
    pub ssim: f64,
    pub rmse: f64,
    pub noisy_ssim: f64,
    pub noisy_rmse: f64,
}

/// Run metadata attached to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub label: String,
    pub split: String,
    pub seed: u64,
    pub unit: RmseUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub meta: RunMeta,
    pub rows: Vec<SliceRow>,
    pub ssim: Aggregate,
    pub rmse: Aggregate,
    pub noisy_ssim: Aggregate,
    pub noisy_rmse: Aggregate,
}

impl EvalReport {
    fn from_rows(fingerprint: String, meta: RunMeta, rows: Vec<SliceRow>) -> Self {
        let col = |f: fn(&SliceRow) -> f64| Aggregate::of(&rows.iter().map(f).collect::<Vec<_>>());
        Self {
            fingerprint,
            meta,
            ssim: col(|r| r.ssim),
            rmse: col(|r| r.rmse),
            noisy_ssim: col(|r| r.noisy_ssim),
            noisy_rmse: col(|r| r.noisy_rmse),
            rows,
        }
    }

    pub fn ssim_gain(&self) -> f64 {
        self.ssim.mean - self.noisy_ssim.mean
    }

    pub fn rmse_gain(&self) -> f64 {
        self.noisy_rmse.mean - self.rmse.mean
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| LomaeError::io(path, e))
    }

    pub fn summary(&self) -> String {
        format!(
            "{label} [{fp}] split={split} seed={seed} n={n}\n  \
             SSIM {s:.4} +- {ss:.4} (noisy {ns:.4}, gain {g:+.4})\n  \
             RMSE {r:.4} +- {rs:.4} {unit} (noisy {nr:.4})\n  \
             reference (clinical data, not reproduced): LDCT SSIM {l1} RMSE {l2}; SwinIR+LoMAE SSIM {p1} +- {p2}, RMSE {p3} +- {p4}\n",
            label = self.meta.label,
            fp = self.fingerprint,
            split = self.meta.split,
            seed = self.meta.seed,
            n = self.rows.len(),
            s = self.ssim.mean,
            ss = self.ssim.std,
            ns = self.noisy_ssim.mean,
            g = self.ssim_gain(),
            r = self.rmse.mean,
            rs = self.rmse.std,
            unit = self.meta.unit.label,
            nr = self.noisy_rmse.mean,
            l1 = reference::LDCT_SSIM,
            l2 = reference::LDCT_RMSE,
            p1 = reference::SWINIR_LOMAE_SSIM,
            p2 = reference::SWINIR_LOMAE_SSIM_STD,
            p3 = reference::SWINIR_LOMAE_RMSE,
            p4 = reference::SWINIR_LOMAE_RMSE_STD,
        )
    }
}

/// Scores `model` on every pair of `test`, alongside the noisy input.
pub fn evaluate(model: &Model, test: &PairedPool, meta: RunMeta) -> Result<EvalReport> {
    ensure!(!test.is_empty(), InvalidArgument, "test pool is empty");
    let mut rows = Vec::with_capacity(test.len());
    for k in 0..test.len() {
        let (x, y) = (test.noisy(k), test.clean(k));
        let pred = model.forward(x)?;
        rows.push(SliceRow {
            patient_id: test.patient(k).to_string(),
            slice_index: test.slice_index(k),
            ssim: ssim_metric(&pred, y)?,
            rmse: rmse_metric(&pred, y, &meta.unit)?,
            noisy_ssim: ssim_metric(x, y)?,
            noisy_rmse: rmse_metric(x, y, &meta.unit)?,
        });
    }
    Ok(EvalReport::from_rows(model.config.fingerprint(), meta, rows))
}
