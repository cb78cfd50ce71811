use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::swin::effective_window;
use crate::{LomaeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    SwinirStyle,
    SunetStyle,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::SwinirStyle => "swinir_style",
            Arch::SunetStyle => "sunet_style",
        })
    }
}

impl FromStr for Arch {
    type Err = LomaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "swinir_style" | "swinir" => Ok(Arch::SwinirStyle),
            "sunet_style" | "sunet" => Ok(Arch::SunetStyle),
            other => Err(LomaeError::Config(format!("unknown arch '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Blocks per residual group (flat) or per resolution level (U-shaped).
    pub depths: Vec<usize>,
    pub embed_dim: usize,
    pub n_heads: usize,
    pub window_size: usize,
    pub mlp_ratio: f64,
    /// Masking patch; the input must tile into it.
    pub patch_size: usize,
    /// Token patch of the U-shaped net's embedding layer.
    pub embed_patch: usize,
    pub input_size: usize,
    pub use_front_to_end_shortcut: bool,
}

impl ModelConfig {
    pub fn paper_swinir() -> Self {
        Self {
            arch: Arch::SwinirStyle,
            depths: vec![4, 4, 4, 4],
            embed_dim: 60,
            n_heads: 6,
            window_size: 8,
            mlp_ratio: 2.0,
            patch_size: 8,
            embed_patch: 1,
            input_size: 256,
            use_front_to_end_shortcut: true,
        }
    }

    pub fn paper_sunet() -> Self {
        Self {
            arch: Arch::SunetStyle,
            depths: vec![2, 2, 2, 2],
            embed_dim: 80,
            n_heads: 8,
            window_size: 8,
            mlp_ratio: 4.0,
            patch_size: 8,
            embed_patch: 4,
            input_size: 256,
            use_front_to_end_shortcut: true,
        }
    }

    /// Small flat network for 64x64 desk runs.
    pub fn desk_swinir() -> Self {
        Self {
            depths: vec![2, 2],
            embed_dim: 16,
            n_heads: 2,
            input_size: 64,
            ..Self::paper_swinir()
        }
    }

    pub fn desk_sunet() -> Self {
        Self {
            depths: vec![2, 2, 2],
            embed_dim: 16,
            n_heads: 2,
            mlp_ratio: 2.0,
            input_size: 64,
            ..Self::paper_sunet()
        }
    }

    pub fn with_shortcut(&self, on: bool) -> Self {
        Self {
            use_front_to_end_shortcut: on,
            ..self.clone()
        }
    }

    pub fn n_blocks(&self) -> usize {
        match self.arch {
            Arch::SwinirStyle => self.depths.iter().sum(),
            Arch::SunetStyle => {
                let l = self.depths.len();
                self.depths.iter().sum::<usize>() + self.depths[..l.saturating_sub(1)].iter().sum::<usize>()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.depths.is_empty(), Config, "depths must not be empty");
        ensure!(self.depths.iter().all(|&d| d > 0), Config, "every depth must be positive");
        ensure!(self.embed_dim > 0 && self.n_heads > 0, Config, "embed_dim and n_heads must be positive");
        ensure!(
            self.embed_dim % self.n_heads == 0,
            Config,
            "embed_dim {} not divisible by n_heads {}",
            self.embed_dim,
            self.n_heads
        );
        ensure!(self.window_size > 0, Config, "window_size must be positive");
        ensure!(self.mlp_ratio > 0.0 && self.mlp_ratio.is_finite(), Config, "mlp_ratio must be positive");
        ensure!(self.patch_size > 0 && self.input_size > 0, Config, "sizes must be positive");
        ensure!(
            self.input_size % self.patch_size == 0,
            Config,
            "input_size {} not divisible by patch_size {}",
            self.input_size,
            self.patch_size
        );
        match self.arch {
            Arch::SwinirStyle => {
                let (ws, _) = effective_window(self.input_size, self.input_size, self.window_size, 0);
                ensure!(
                    self.input_size % ws == 0,
                    Config,
                    "input_size {} not divisible by window {ws}",
                    self.input_size
                );
            }
            Arch::SunetStyle => {
                ensure!(self.embed_patch > 0, Config, "embed_patch must be positive");
                ensure!(
                    self.input_size % self.embed_patch == 0,
                    Config,
                    "input_size {} not divisible by embed_patch {}",
                    self.input_size,
                    self.embed_patch
                );
                let merges = self.depths.len() - 1;
                let grid = self.input_size / self.embed_patch;
                let factor = 1usize << merges;
                ensure!(
                    grid % factor == 0,
                    Config,
                    "depth mismatch: {} levels need {merges} merges but a {grid}x{grid} token grid halves evenly only {} times",
                    self.depths.len(),
                    grid.trailing_zeros()
                );
                for level in 0..self.depths.len() {
                    let g = grid >> level;
                    let (ws, _) = effective_window(g, g, self.window_size, 0);
                    ensure!(g % ws == 0, Config, "level {level} grid {g} not divisible by window {ws}");
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON with the parameter-free shortcut flag left out.
    fn canonical(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut v {
            map.remove("use_front_to_end_shortcut");
        }
        v.to_string()
    }

    /// FNV-1a 64 over the canonical config, as 16 hex digits. Two configs that
    /// differ only in the shortcut flag share a fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_configs_validate() {
        ModelConfig::paper_swinir().validate().unwrap();
        ModelConfig::paper_sunet().validate().unwrap();
        ModelConfig::desk_swinir().validate().unwrap();
        ModelConfig::desk_sunet().validate().unwrap();
    }

    #[test]
    fn fingerprint_ignores_only_the_shortcut() {
        let a = ModelConfig::desk_swinir();
        assert_eq!(a.fingerprint(), a.with_shortcut(false).fingerprint());
        let b = ModelConfig { embed_dim: 18, ..a.clone() };
        assert_ne!(a.fingerprint(), b.fingerprint());
        let c = ModelConfig { arch: Arch::SunetStyle, ..a.clone() };
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn too_many_levels_is_a_depth_mismatch() {
        let mut c = ModelConfig::desk_sunet();
        c.depths = vec![2; 6];
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("depth mismatch"), "{err}");
    }

    #[test]
    fn heads_must_divide_dim() {
        let c = ModelConfig { n_heads: 5, ..ModelConfig::desk_swinir() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn block_counts() {
        assert_eq!(ModelConfig::paper_swinir().n_blocks(), 16);
        assert_eq!(ModelConfig::paper_sunet().n_blocks(), 14);
    }
}
