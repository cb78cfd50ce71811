//! Flat `key = value` configuration files.
//!
//! Lines starting with `#` are comments. Training keys apply to both stages
//! unless prefixed with `pretrain.` or `finetune.`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::eval::ExperimentConfig;
use crate::train::TrainConfig;
use crate::{LomaeError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LomaeError::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(LomaeError::Config(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(LomaeError::Config(format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LomaeError::io(path, e))?;
        Self::parse(&text)
    }

    /// Overrides fields of `cfg`; unknown keys are an error.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        // stage-prefixed keys go last so they override shared ones
        let staged = |k: &str| k.starts_with("pretrain.") || k.starts_with("finetune.");
        let (shared, prefixed): (Vec<_>, Vec<_>) = self.entries.iter().partition(|(k, _)| !staged(k));
        for (k, v) in shared.into_iter().chain(prefixed) {
            apply_key(cfg, k, v)?;
        }
        cfg.validate()
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| LomaeError::Config(format!("bad value '{v}' for '{key}'")))
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn apply_train(t: &mut TrainConfig, key: &str, v: &str) -> Result<bool> {
    match key {
        "lr" => t.schedule.lr0 = num(key, v)?,
        "decay_every" => t.schedule.every = num(key, v)?,
        "decay_factor" => t.schedule.factor = num(key, v)?,
        "epochs" => t.epochs = num(key, v)?,
        "max_iterations" => t.max_iterations = Some(num(key, v)?),
        "batch_size" => t.batch_size = num(key, v)?,
        "patch_size" => t.mask_patch = num(key, v)?,
        "mask_ratio" => t.mask_ratio = num(key, v)?,
        "alpha" => t.weights.alpha = num(key, v)?,
        "beta" => t.weights.beta = num(key, v)?,
        "augment" => t.augment = num(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, v: &str) -> Result<()> {
    if let Some(k) = key.strip_prefix("pretrain.") {
        return match apply_train(&mut cfg.pretrain, k, v)? {
            true => Ok(()),
            false => Err(LomaeError::Config(format!("unknown key '{key}'"))),
        };
    }
    if let Some(k) = key.strip_prefix("finetune.") {
        return match apply_train(&mut cfg.finetune, k, v)? {
            true => Ok(()),
            false => Err(LomaeError::Config(format!("unknown key '{key}'"))),
        };
    }
    let a = apply_train(&mut cfg.pretrain, key, v)?;
    if apply_train(&mut cfg.finetune, key, v)? || a {
        if key == "patch_size" {
            cfg.model.patch_size = num(key, v)?;
        }
        return Ok(());
    }
    let m = &mut cfg.model;
    match key {
        "arch" => m.arch = v.parse()?,
        "depths" => m.depths = list(key, v)?,
        "embed_dim" => m.embed_dim = num(key, v)?,
        "heads" => m.n_heads = num(key, v)?,
        "window_size" => m.window_size = num(key, v)?,
        "mlp_ratio" => m.mlp_ratio = num(key, v)?,
        "embed_patch" => m.embed_patch = num(key, v)?,
        "input_size" => {
            m.input_size = num(key, v)?;
            cfg.cohort.grid = m.input_size;
        }
        "seed" => cfg.seeds = vec![num(key, v)?],
        "seeds" => cfg.seeds = list(key, v)?.into_iter().map(|s| s as u64).collect(),
        "labeled_patients" => cfg.labeled_patients = num(key, v)?,
        "n_folds" => cfg.n_folds = num(key, v)?,
        "fold" => cfg.fold = num(key, v)?,
        "split_seed" => cfg.split_seed = num(key, v)?,
        "dose" => cfg.train_dose = num(key, v)?,
        "sweep_doses" => {
            cfg.sweep_doses = v.split(',').map(|s| num(key, s.trim())).collect::<Result<_>>()?;
        }
        "n_patients" => cfg.cohort.n_patients = num(key, v)?,
        "slices_per_patient" => cfg.cohort.slices_per_patient = num(key, v)?,
        "n_views" => cfg.cohort.n_views = num(key, v)?,
        "phantom" => cfg.cohort.phantom = v.parse()?,
        "attenuation_per_mm" => cfg.cohort.attenuation_per_mm = num(key, v)?,
        "cohort_seed" => cfg.cohort.seed = num(key, v)?,
        _ => return Err(LomaeError::Config(format!("unknown key '{key}'"))),
    }
    Ok(())
}
