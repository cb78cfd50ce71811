use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::train::{loss_ssim, SsimParams};
use crate::{Result, Slice};

/// Table I reference values, kept for context in reports.
pub mod reference {
    pub const LDCT_SSIM: f64 = 0.9359;
    pub const LDCT_RMSE: f64 = 10.4833;
    pub const SWINIR_LOMAE_SSIM: f64 = 0.9609;
    pub const SWINIR_LOMAE_SSIM_STD: f64 = 0.0007;
    pub const SWINIR_LOMAE_RMSE: f64 = 6.7355;
    pub const SWINIR_LOMAE_RMSE_STD: f64 = 0.0800;
    /// CKA between the 2e4 and 1e5 dose features, plain vs pretrained.
    pub const CKA_RAW: f64 = 0.24;
    pub const CKA_LOMAE: f64 = 0.76;
}

/// Unit convention for reported RMSE values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseUnit {
    pub label: String,
    /// Multiplier applied to differences in image units.
    pub scale: f64,
}

impl RmseUnit {
    pub fn normalized() -> Self {
        Self {
            label: "normalized".into(),
            scale: 1.0,
        }
    }

    /// Differences expressed as a fraction of a display window, times 100.
    pub fn window_percent(window_width: f64) -> Self {
        Self {
            label: format!("percent of {window_width} window"),
            scale: 100.0 / window_width,
        }
    }
}

impl Default for RmseUnit {
    fn default() -> Self {
        Self::normalized()
    }
}

pub fn ssim_metric(a: &Slice, b: &Slice) -> Result<f64> {
    loss_ssim(a, b, &SsimParams::default())
}

pub fn rmse_metric(a: &Slice, b: &Slice, unit: &RmseUnit) -> Result<f64> {
    ensure!(a.dim() == b.dim(), Shape, "{:?} vs {:?}", a.dim(), b.dim());
    ensure!(!a.is_empty(), InvalidArgument, "empty images");
    let mse = a.iter().zip(b).map(|(x, y)| (unit.scale * (x - y)).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(mse.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        let x = Slice::from_shape_fn((16, 16), |(i, j)| (i * j) as f64 / 256.0);
        let u = RmseUnit::normalized();
        assert_eq!(rmse_metric(&x, &x, &u).unwrap(), 0.0);
        assert_eq!(ssim_metric(&x, &x).unwrap(), 1.0);
        let shifted = x.mapv(|v| v + 0.25);
        assert!((rmse_metric(&x, &shifted, &u).unwrap() - 0.25).abs() < 1e-15);
        let pct = RmseUnit::window_percent(2.0);
        assert!((rmse_metric(&x, &shifted, &pct).unwrap() - 12.5).abs() < 1e-12);
    }
}
