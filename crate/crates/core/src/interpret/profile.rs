use std::str::FromStr;

use crate::error::ensure;
use crate::{LomaeError, Result, Slice};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// A row.
    Horizontal,
    /// A column.
    Vertical,
}

impl FromStr for Axis {
    type Err = LomaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" | "h" | "row" => Ok(Axis::Horizontal),
            "vertical" | "v" | "col" => Ok(Axis::Vertical),
            other => Err(LomaeError::InvalidArgument(format!("unknown axis '{other}'"))),
        }
    }
}

pub fn intensity_profile(slice: &Slice, axis: Axis, index: usize) -> Result<Vec<f64>> {
    let (h, w) = slice.dim();
    match axis {
        Axis::Horizontal => {
            ensure!(index < h, InvalidArgument, "row {index} out of range ({h} rows)");
            Ok(slice.row(index).to_vec())
        }
        Axis::Vertical => {
            ensure!(index < w, InvalidArgument, "column {index} out of range ({w} columns)");
            Ok(slice.column(index).to_vec())
        }
    }
}

pub fn profile_mae(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure!(a.len() == b.len(), Shape, "profiles of length {} and {}", a.len(), b.len());
    ensure!(!a.is_empty(), InvalidArgument, "empty profile");
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}
