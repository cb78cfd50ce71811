use serde::{Deserialize, Serialize};

use super::report::{evaluate, Aggregate, EvalReport, RunMeta};
use crate::data::PairedPool;
use crate::error::ensure;
use crate::zoo::Model;
use crate::{LomaeError, Result};

/// One point of a dose-robustness curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseRow {
    pub dose: f64,
    pub model: String,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoseSweep {
    pub rows: Vec<DoseRow>,
    pub reports: Vec<EvalReport>,
}

fn row(dose: f64, model: &str, ssim: Aggregate, rmse: Aggregate) -> DoseRow {
    DoseRow {
        dose,
        model: model.to_string(),
        ssim_mean: ssim.mean,
        ssim_std: ssim.std,
        rmse_mean: rmse.mean,
        rmse_std: rmse.std,
    }
}

impl DoseSweep {
    /// SSIM means of one model in sweep order.
    pub fn ssim_curve(&self, model: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.model == model).map(|r| r.ssim_mean).collect()
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| LomaeError::io(path, e))
    }
}

/// Number of adjacent steps that go up in a curve expected to fall.
pub fn inversions(curve: &[f64]) -> usize {
    curve.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Evaluates two models trained at one dose on test pools simulated at
/// other doses (given from highest to lowest). Rows: noisy input, then each
/// model, per dose.
pub fn dose_sweep(
    models: &[(&str, &Model)],
    pools: &[(f64, PairedPool)],
    meta: &RunMeta,
) -> Result<DoseSweep> {
    ensure!(!pools.is_empty(), InvalidArgument, "empty dose series");
    ensure!(!models.is_empty(), InvalidArgument, "no models to sweep");
    let fp = models[0].1.config.fingerprint();
    ensure!(
        models.iter().all(|(_, m)| m.config.fingerprint() == fp),
        InvalidArgument,
        "swept models must share one architecture"
    );
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (dose, pool) in pools {
        for (i, (name, m)) in models.iter().enumerate() {
            let r = evaluate(
                m,
                pool,
                RunMeta {
                    label: format!("{name}@{dose:e}"),
                    ..meta.clone()
                },
            )?;
            if i == 0 {
                rows.push(row(*dose, "noisy", r.noisy_ssim, r.noisy_rmse));
            }
            rows.push(row(*dose, name, r.ssim, r.rmse));
            reports.push(r);
        }
    }
    Ok(DoseSweep { rows, reports })
}
