use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::error::ensure;
use crate::io::archive;
use crate::nn::NamedTensor;
use crate::{LomaeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrained,
    Finetuned,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Pretrained => "pretrained",
            Stage::Finetuned => "finetuned",
        })
    }
}

impl FromStr for Stage {
    type Err = LomaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrained" => Ok(Stage::Pretrained),
            "finetuned" => Ok(Stage::Finetuned),
            other => Err(LomaeError::Checkpoint(format!("unknown stage '{other}'"))),
        }
    }
}

/// Persisted weights plus the metadata needed to resume or transfer them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
    pub stage: Stage,
    pub epoch: usize,
    /// ChaCha seed and word position of the training RNG.
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    fingerprint: String,
    stage: Stage,
    epoch: usize,
    rng_seed: Vec<u8>,
    rng_word_pos: String,
    config: ModelConfig,
    weights: String,
}

pub const WEIGHTS_FILE: &str = "weights.lmt";
pub const MANIFEST_FILE: &str = "manifest.json";

impl Checkpoint {
    pub fn from_model(model: &Model, stage: Stage, epoch: usize, rng_seed: [u8; 32], rng_word_pos: u128) -> Self {
        Self {
            config: model.config.clone(),
            tensors: model.params.tensors().to_vec(),
            stage,
            epoch,
            rng_seed,
            rng_word_pos,
        }
    }

    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }

    /// Rebuilds the exact model this checkpoint was taken from.
    pub fn to_model(&self) -> Result<Model> {
        load_into(self, &self.config)
    }

    /// Writes `weights.lmt` and `manifest.json` into directory `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| LomaeError::io(dir, e))?;
        archive::write(&dir.join(WEIGHTS_FILE), &self.tensors)?;
        let manifest = Manifest {
            fingerprint: self.fingerprint(),
            stage: self.stage,
            epoch: self.epoch,
            rng_seed: self.rng_seed.to_vec(),
            rng_word_pos: self.rng_word_pos.to_string(),
            config: self.config.clone(),
            weights: WEIGHTS_FILE.to_string(),
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text).map_err(|e| LomaeError::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| LomaeError::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        ensure!(
            m.fingerprint == m.config.fingerprint(),
            Checkpoint,
            "manifest fingerprint {} does not match its config ({})",
            m.fingerprint,
            m.config.fingerprint()
        );
        let rng_seed: [u8; 32] = m
            .rng_seed
            .as_slice()
            .try_into()
            .map_err(|_| LomaeError::Checkpoint("rng seed must be 32 bytes".into()))?;
        let rng_word_pos = m
            .rng_word_pos
            .parse()
            .map_err(|_| LomaeError::Checkpoint(format!("bad rng word position '{}'", m.rng_word_pos)))?;
        let tensors = archive::read(&dir.join(&m.weights))?;
        Ok(Self {
            config: m.config,
            tensors,
            stage: m.stage,
            epoch: m.epoch,
            rng_seed,
            rng_word_pos,
        })
    }
}

fn load_into(ckpt: &Checkpoint, config: &ModelConfig) -> Result<Model> {
    let mut model = Model::build(config, 0)?;
    for t in model.params.tensors_mut() {
        let src = ckpt
            .tensors
            .iter()
            .find(|s| s.name == t.name)
            .ok_or_else(|| LomaeError::Checkpoint(format!("tensor '{}' missing from checkpoint", t.name)))?;
        ensure!(
            src.shape == t.shape,
            Checkpoint,
            "tensor '{}' has shape {:?}, model expects {:?}",
            t.name,
            src.shape,
            t.shape
        );
        t.data.copy_from_slice(&src.data);
    }
    Ok(model)
}

/// Builds `finetune_config` and copies every weight from `ckpt`. The configs
/// may differ only in the shortcut flag.
pub fn transfer_weights(ckpt: &Checkpoint, finetune_config: &ModelConfig) -> Result<Model> {
    ensure!(
        ckpt.fingerprint() == finetune_config.fingerprint(),
        Checkpoint,
        "fingerprint mismatch: checkpoint {} ({}) vs target {} ({})",
        ckpt.fingerprint(),
        ckpt.config.arch,
        finetune_config.fingerprint(),
        finetune_config.arch
    );
    load_into(ckpt, finetune_config)
}
