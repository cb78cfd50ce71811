//! End-to-end comparison of masked pretraining plus finetuning against
//! finetuning from scratch on a simulated cohort.

use serde::{Deserialize, Serialize};

use super::metrics::RmseUnit;
use super::report::{evaluate, EvalReport, RunMeta};
use super::sweep::{dose_sweep, DoseSweep};
use crate::data::{make_split, simulate_cohort, AuditSummary, CohortSpec, Dataset, Fold, PairedPool};
use crate::error::ensure;
use crate::tomo::{QUARTER_DOSE_I0, STANDARD_DOSE_SERIES};
use crate::train::{finetune, finetune_from_scratch, pretrain, HistoryRow, StepDecay, TrainConfig};
use crate::zoo::{Checkpoint, Model, ModelConfig};
use crate::{LomaeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub cohort: CohortSpec,
    pub model: ModelConfig,
    pub n_folds: usize,
    pub fold: usize,
    pub labeled_patients: usize,
    pub split_seed: u64,
    pub train_dose: f64,
    /// Test doses for the robustness sweep, highest first; empty to skip.
    pub sweep_doses: Vec<f64>,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    /// 200 slices from 10 patients; fold 0 of 5 tests on 2 patients and 2 of
    /// the remaining 8 are labeled.
    pub fn desk() -> Self {
        let schedule = StepDecay {
            lr0: 1e-3,
            every: 600,
            factor: 0.5,
        };
        Self {
            cohort: CohortSpec::desk(),
            model: ModelConfig::desk_swinir(),
            n_folds: 5,
            fold: 0,
            labeled_patients: 2,
            split_seed: 7,
            train_dose: QUARTER_DOSE_I0,
            sweep_doses: STANDARD_DOSE_SERIES.to_vec(),
            pretrain: TrainConfig {
                epochs: 100,
                max_iterations: Some(1800),
                schedule,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                epochs: 100,
                max_iterations: Some(950),
                schedule: StepDecay {
                    lr0: 4e-4,
                    every: 320,
                    ..schedule
                },
                ..TrainConfig::default()
            },
            seeds: vec![0, 1, 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        ensure!(
            self.cohort.grid == self.model.input_size,
            Config,
            "cohort grid {} vs model input {}",
            self.cohort.grid,
            self.model.input_size
        );
        ensure!(self.fold < self.n_folds, Config, "fold {} of {}", self.fold, self.n_folds);
        ensure!(!self.seeds.is_empty(), Config, "no training seeds");
        Ok(())
    }
}

/// Simulated images and the patient split shared by every seed.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    /// All patients at the training dose.
    pub train_set: Dataset,
    /// Test patients re-simulated at each sweep dose.
    pub sweep: Vec<(f64, Dataset)>,
    pub fold: Fold,
}

impl ExperimentData {
    pub fn split_tag(&self) -> String {
        format!(
            "train={} labeled={} test={}",
            self.fold.train.join("+"),
            self.fold.labeled.join("+"),
            self.fold.test.join("+")
        )
    }

    pub fn test_pool(&self) -> PairedPool {
        self.train_set.paired_pool(&self.fold.test)
    }

    pub fn sweep_pools(&self) -> Vec<(f64, PairedPool)> {
        self.sweep.iter().map(|(d, ds)| (*d, ds.paired_pool(&self.fold.test))).collect()
    }
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    cfg.validate()?;
    let ids: Vec<String> = (0..cfg.cohort.n_patients).map(CohortSpec::patient_id).collect();
    let plan = make_split(&ids, cfg.n_folds, cfg.labeled_patients, cfg.split_seed)?;
    let fold = plan.folds[cfg.fold].clone();
    let train_set = simulate_cohort(&cfg.cohort, &[cfg.train_dose], None)?.remove(0);
    let sweep = if cfg.sweep_doses.is_empty() {
        Vec::new()
    } else {
        let test_idx: Vec<usize> = (0..cfg.cohort.n_patients).filter(|&p| fold.test.contains(&ids[p])).collect();
        // the training dose goes first so sweep noise never reuses its seeds
        let mut doses = vec![cfg.train_dose];
        doses.extend(&cfg.sweep_doses);
        let mut sets = simulate_cohort(&cfg.cohort, &doses, Some(&test_idx))?;
        sets.remove(0);
        cfg.sweep_doses.iter().copied().zip(sets).collect()
    };
    Ok(ExperimentData { train_set, sweep, fold })
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub pretrain_checkpoint: Checkpoint,
    pub pretrain_audit: AuditSummary,
    pub lomae_audit: AuditSummary,
    pub scratch_audit: AuditSummary,
    pub pretrain_history: Vec<HistoryRow>,
    pub lomae_history: Vec<HistoryRow>,
    pub scratch_history: Vec<HistoryRow>,
    pub lomae: EvalReport,
    pub scratch: EvalReport,
    pub sweep: Option<DoseSweep>,
    pub lomae_model: Model,
    pub scratch_model: Model,
}

fn meta(label: &str, data: &ExperimentData, seed: u64) -> RunMeta {
    RunMeta {
        label: label.to_string(),
        split: data.split_tag(),
        seed,
        unit: RmseUnit::normalized(),
    }
}

/// Pretrain on noisy training-fold slices, then finetune it and a randomly
/// initialized twin on the labeled patients with identical seeds and data.
pub fn run_seed(cfg: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<SeedRun> {
    let noisy = data.train_set.noisy_pool(&data.fold.train);
    let pre = pretrain(
        Model::build(&cfg.model.with_shortcut(false), seed)?,
        &noisy,
        &TrainConfig { seed, ..cfg.pretrain.clone() },
    )?;
    let labeled = data.train_set.paired_pool(&data.fold.labeled);
    let ft = TrainConfig {
        seed: seed.wrapping_add(1_000),
        ..cfg.finetune.clone()
    };
    let lomae = finetune(&pre.checkpoint, &labeled, &ft)?;
    let scratch = finetune_from_scratch(&cfg.model, seed, &labeled, &ft)?;
    let test = data.test_pool();
    let lomae_report = evaluate(&lomae.model, &test, meta("lomae", data, seed))?;
    let scratch_report = evaluate(&scratch.model, &test, meta("scratch", data, seed))?;
    let sweep = if data.sweep.is_empty() {
        None
    } else {
        Some(dose_sweep(
            &[("scratch", &scratch.model), ("lomae", &lomae.model)],
            &data.sweep_pools(),
            &meta("sweep", data, seed),
        )?)
    };
    Ok(SeedRun {
        seed,
        pretrain_checkpoint: pre.checkpoint,
        pretrain_audit: pre.audit,
        lomae_audit: lomae.audit,
        scratch_audit: scratch.audit,
        pretrain_history: pre.state.history,
        lomae_history: lomae.state.history,
        scratch_history: scratch.state.history,
        lomae: lomae_report,
        scratch: scratch_report,
        sweep,
        lomae_model: lomae.model,
        scratch_model: scratch.model,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentData, Vec<SeedRun>)> {
    let data = prepare_data(cfg)?;
    let runs = cfg.seeds.iter().map(|&s| run_seed(cfg, &data, s)).collect::<Result<Vec<_>>>()?;
    Ok((data, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyRow {
    pub labeled_patients: usize,
    pub model: String,
    pub seed: u64,
    pub ssim: f64,
    pub rmse: f64,
    pub noisy_ssim: f64,
}

/// Finetunes both variants for each labeled-patient count. The pretrained
/// checkpoint is computed once per seed from the full unlabeled pool.
pub fn dependency_sweep(cfg: &ExperimentConfig, counts: &[usize], seed: u64) -> Result<Vec<DependencyRow>> {
    let data = prepare_data(&ExperimentConfig {
        sweep_doses: Vec::new(),
        ..cfg.clone()
    })?;
    let train_n = data.fold.train.len();
    ensure!(!counts.is_empty(), InvalidArgument, "no labeled-patient counts");
    if let Some(&k) = counts.iter().find(|&&k| k == 0 || k > train_n) {
        return Err(LomaeError::InvalidArgument(format!(
            "cannot label {k} patients: the fold has {train_n} training patients"
        )));
    }
    let pre = pretrain(
        Model::build(&cfg.model.with_shortcut(false), seed)?,
        &data.train_set.noisy_pool(&data.fold.train),
        &TrainConfig { seed, ..cfg.pretrain.clone() },
    )?;
    let ids: Vec<String> = (0..cfg.cohort.n_patients).map(CohortSpec::patient_id).collect();
    let test = data.test_pool();
    let ft = TrainConfig {
        seed: seed.wrapping_add(1_000),
        ..cfg.finetune.clone()
    };
    let mut rows = Vec::new();
    for &k in counts {
        let fold = make_split(&ids, cfg.n_folds, k, cfg.split_seed)?.folds[cfg.fold].clone();
        debug_assert_eq!(fold.test, data.fold.test);
        let labeled = data.train_set.paired_pool(&fold.labeled);
        let lomae = finetune(&pre.checkpoint, &labeled, &ft)?;
        let scratch = finetune_from_scratch(&cfg.model, seed, &labeled, &ft)?;
        for (name, model) in [("lomae", &lomae.model), ("scratch", &scratch.model)] {
            let r = evaluate(model, &test, meta(name, &data, seed))?;
            rows.push(DependencyRow {
                labeled_patients: k,
                model: name.to_string(),
                seed,
                ssim: r.ssim.mean,
                rmse: r.rmse.mean,
                noisy_ssim: r.noisy_ssim.mean,
            });
        }
    }
    Ok(rows)
}
