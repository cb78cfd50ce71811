use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_combined_grad, loss_l1_grad, LossWeights, SsimParams};
use super::mask::{apply_mask, make_mask, DEFAULT_MASK_PATCH, DEFAULT_MASK_RATIO};
use super::schedule::StepDecay;
use crate::data::{epoch_order, AccessKind, AuditSummary, AugmentOp, NoisyPool, PairedPool};
use crate::error::ensure;
use crate::nn::{Adam, AdamConfig, Grads};
use crate::zoo::{transfer_weights, Checkpoint, Model, ModelConfig, Stage};
use crate::{LomaeError, Result, Slice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stops early once this many optimizer steps have run.
    pub max_iterations: Option<usize>,
    pub batch_size: usize,
    pub schedule: StepDecay,
    pub adam: AdamConfig,
    pub mask_patch: usize,
    pub mask_ratio: f64,
    pub weights: LossWeights,
    pub ssim: SsimParams,
    /// Random rotation/flip per sample.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            max_iterations: None,
            batch_size: 1,
            schedule: StepDecay::default(),
            adam: AdamConfig::default(),
            mask_patch: DEFAULT_MASK_PATCH,
            mask_ratio: DEFAULT_MASK_RATIO,
            weights: LossWeights::default(),
            ssim: SsimParams::default(),
            augment: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs > 0, Config, "epochs must be positive");
        ensure!(self.batch_size > 0, Config, "batch_size must be positive");
        self.schedule.validate()?;
        self.weights.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStage {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub stage: TrainStage,
    pub epoch: usize,
    pub iteration: usize,
    pub lr: f64,
    pub optimizer: Adam,
    pub history: Vec<HistoryRow>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub checkpoint: Checkpoint,
    pub state: TrainState,
    /// Data accesses made during the run.
    pub audit: AuditSummary,
}

impl TrainOutcome {
    pub fn history(&self) -> &[HistoryRow] {
        &self.state.history
    }
}

/// Loss and input gradient for one sample.
type StepFn<'a> = dyn FnMut(&Model, usize, &mut ChaCha8Rng, &mut Grads) -> Result<f64> + 'a;

fn pick_op(rng: &mut ChaCha8Rng, on: bool) -> AugmentOp {
    if on {
        AugmentOp::ALL[rng.random_range(0..AugmentOp::ALL.len())]
    } else {
        AugmentOp::None
    }
}

fn run_loop(
    mut model: Model,
    n_samples: usize,
    cfg: &TrainConfig,
    stage: TrainStage,
    sample_step: &mut StepFn<'_>,
) -> Result<(Model, TrainState, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = TrainState {
        stage,
        epoch: 0,
        iteration: 0,
        lr: cfg.schedule.lr_at(0),
        optimizer: Adam::new(&model.params, cfg.adam),
        history: Vec::new(),
    };
    let mut grads = Grads::zeros_like(&model.params);
    let limit = cfg.max_iterations.unwrap_or(usize::MAX);
    'outer: for epoch in 0..cfg.epochs {
        state.epoch = epoch;
        let order = epoch_order(n_samples, cfg.seed, epoch);
        for batch in order.chunks(cfg.batch_size) {
            if state.iteration >= limit {
                break 'outer;
            }
            grads.zero();
            let mut loss = 0.0;
            for &k in batch {
                loss += sample_step(&model, k, &mut rng, &mut grads)?;
            }
            let n = batch.len() as f64;
            grads.scale(1.0 / n);
            loss /= n;
            ensure!(loss.is_finite(), Degenerate, "loss diverged at iteration {}", state.iteration);
            state.lr = cfg.schedule.lr_at(state.iteration);
            state.optimizer.step(&mut model.params, &grads, state.lr);
            state.history.push(HistoryRow {
                iteration: state.iteration,
                loss,
                lr: state.lr,
            });
            state.iteration += 1;
        }
    }
    Ok((model, state, rng))
}

fn checkpoint_of(model: &Model, stage: Stage, state: &TrainState, rng: &ChaCha8Rng) -> Checkpoint {
    Checkpoint::from_model(model, stage, state.epoch + 1, rng.get_seed(), rng.get_word_pos())
}

/// Masked-reconstruction pretraining: minimizes `L1(D(x * M), x)` over the
/// noisy pool. Only noisy images are read.
pub fn pretrain(model: Model, pool: &NoisyPool, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(
        !model.config.use_front_to_end_shortcut,
        Protocol,
        "pretraining needs the front-to-end shortcut disabled"
    );
    ensure!(!pool.is_empty(), InvalidArgument, "noisy pool is empty");
    let mark = pool.log().mark();
    let size = model.config.input_size;
    let mut step = |m: &Model, k: usize, rng: &mut ChaCha8Rng, grads: &mut Grads| -> Result<f64> {
        let op = pick_op(rng, cfg.augment);
        let x = op.apply(pool.noisy(k));
        let mask = make_mask((size, size), cfg.mask_patch, cfg.mask_ratio, rng.next_u64())?;
        pool.log().record(AccessKind::Mask, pool.patient(k));
        let xm = apply_mask(&x, &mask)?;
        let (pred, cache) = m.forward_train(&xm, None)?;
        let (loss, g) = loss_l1_grad(&pred, &x)?;
        m.backward(&cache, &g, grads);
        Ok(loss)
    };
    let (model, state, rng) = run_loop(model, pool.len(), cfg, TrainStage::Pretrain, &mut step)?;
    let checkpoint = checkpoint_of(&model, Stage::Pretrained, &state, &rng);
    Ok(TrainOutcome {
        model,
        checkpoint,
        state,
        audit: pool.log().since(mark),
    })
}

fn supervised(model: Model, pool: &PairedPool, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(!pool.is_empty(), InvalidArgument, "paired pool is empty");
    ensure!(
        model.config.use_front_to_end_shortcut,
        Protocol,
        "finetuning needs the front-to-end shortcut enabled"
    );
    let mark = pool.log().mark();
    let mut step = |m: &Model, k: usize, rng: &mut ChaCha8Rng, grads: &mut Grads| -> Result<f64> {
        let op = pick_op(rng, cfg.augment);
        let x = op.apply(pool.noisy(k));
        let y = op.apply(pool.clean(k));
        let (pred, cache) = m.forward_train(&x, None)?;
        let (loss, g) = loss_combined_grad(&pred, &y, &cfg.weights, &cfg.ssim)?;
        m.backward(&cache, &g, grads);
        Ok(loss)
    };
    let (model, state, rng) = run_loop(model, pool.len(), cfg, TrainStage::Finetune, &mut step)?;
    let checkpoint = checkpoint_of(&model, Stage::Finetuned, &state, &rng);
    Ok(TrainOutcome {
        model,
        checkpoint,
        state,
        audit: pool.log().since(mark),
    })
}

/// Supervised finetuning of pretrained weights with the shortcut switched on.
pub fn finetune(ckpt: &Checkpoint, pool: &PairedPool, cfg: &TrainConfig) -> Result<TrainOutcome> {
    ensure!(
        ckpt.stage == Stage::Pretrained,
        Protocol,
        "finetuning expects a pretrained checkpoint, got stage '{}'",
        ckpt.stage
    );
    let model = transfer_weights(ckpt, &ckpt.config.with_shortcut(true))?;
    supervised(model, pool, cfg)
}

/// Baseline: the same supervised run from a random initialization.
pub fn finetune_from_scratch(
    config: &ModelConfig,
    init_seed: u64,
    pool: &PairedPool,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    supervised(Model::build(&config.with_shortcut(true), init_seed)?, pool, cfg)
}

/// Writes `iteration,loss,lr` rows.
pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| LomaeError::io(path, e))
}

/// Mean L1 of masked reconstruction over `xs` with fixed mask seeds; for
/// monitoring pretraining on held-out slices.
pub fn masked_reconstruction_l1(model: &Model, xs: &[Slice], cfg: &TrainConfig, mask_seed: u64) -> Result<f64> {
    ensure!(!xs.is_empty(), InvalidArgument, "no slices to score");
    let size = model.config.input_size;
    let mut total = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let mask = make_mask((size, size), cfg.mask_patch, cfg.mask_ratio, mask_seed.wrapping_add(i as u64))?;
        let (pred, _) = model.forward_train(&apply_mask(x, &mask)?, None)?;
        total += super::loss::loss_l1(&pred, x)?;
    }
    Ok(total / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate_cohort, CohortSpec, Dataset};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            depths: vec![1],
            embed_dim: 8,
            n_heads: 2,
            window_size: 8,
            input_size: 16,
            use_front_to_end_shortcut: false,
            ..ModelConfig::desk_swinir()
        }
    }

    fn tiny_data() -> Dataset {
        let spec = CohortSpec {
            n_patients: 2,
            slices_per_patient: 10,
            grid: 16,
            n_views: 24,
            ..CohortSpec::desk()
        };
        simulate_cohort(&spec, &[2.5e5], None).unwrap().remove(0)
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 5,
            max_iterations: Some(50),
            schedule: StepDecay {
                lr0: 2e-3,
                ..StepDecay::default()
            },
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn pretrain_reduces_loss_and_never_reads_clean() {
        let ds = tiny_data();
        let pool = ds.noisy_pool(&ds.patients());
        let out = pretrain(Model::build(&tiny_config(), 1).unwrap(), &pool, &quick(3)).unwrap();
        let h = out.history();
        assert_eq!(h.len(), 50);
        let first: f64 = h[..10].iter().map(|r| r.loss).sum();
        let last: f64 = h[40..].iter().map(|r| r.loss).sum();
        assert!(last < first, "{first} -> {last}");
        assert_eq!(out.audit.clean_reads, 0);
        assert_eq!(out.audit.masks_built, 50);
        assert_eq!(out.checkpoint.stage, Stage::Pretrained);
    }

    #[test]
    fn shortcut_model_rejected_for_pretraining() {
        let ds = tiny_data();
        let pool = ds.noisy_pool(&ds.patients());
        let m = Model::build(&tiny_config().with_shortcut(true), 1).unwrap();
        assert_eq!(pretrain(m, &pool, &quick(0)).unwrap_err().category(), "protocol");
    }

    #[test]
    fn finetune_uses_no_masks_and_only_labeled_patients() {
        let ds = tiny_data();
        let pre = pretrain(
            Model::build(&tiny_config(), 1).unwrap(),
            &ds.noisy_pool(&ds.patients()),
            &TrainConfig {
                max_iterations: Some(5),
                ..quick(1)
            },
        )
        .unwrap();
        let labeled = vec!["P01".to_string()];
        let out = finetune(&pre.checkpoint, &ds.paired_pool(&labeled), &quick(2)).unwrap();
        assert_eq!(out.audit.masks_built, 0);
        assert_eq!(out.audit.patients().into_iter().collect::<Vec<_>>(), labeled);
        assert!(out.model.config.use_front_to_end_shortcut);
        let h = out.history();
        assert!(h[45..].iter().map(|r| r.loss).sum::<f64>() < h[..5].iter().map(|r| r.loss).sum::<f64>());
        // finetuned checkpoints cannot be finetuned again
        assert_eq!(
            finetune(&out.checkpoint, &ds.paired_pool(&labeled), &quick(2)).unwrap_err().category(),
            "protocol"
        );
    }

    #[test]
    fn empty_pool_rejected() {
        let ds = tiny_data();
        let pre = Checkpoint::from_model(&Model::build(&tiny_config(), 1).unwrap(), Stage::Pretrained, 0, [0; 32], 0);
        let err = finetune(&pre, &ds.paired_pool(&[]), &quick(0)).unwrap_err();
        assert_eq!(err.category(), "argument");
    }

    #[test]
    fn zero_body_finetune_starts_at_input_loss() {
        let ds = tiny_data();
        let mut m = Model::build(&tiny_config().with_shortcut(true), 1).unwrap();
        m.zero_output_layer();
        let pool = ds.paired_pool(&ds.patients());
        let out = supervised(
            m,
            &pool,
            &TrainConfig {
                max_iterations: Some(1),
                ..quick(5)
            },
        )
        .unwrap();
        let k = epoch_order(pool.len(), 5, 0)[0];
        let expect = super::super::loss::loss_combined(pool.noisy(k), pool.clean(k), &LossWeights::default(), &SsimParams::default()).unwrap();
        assert_eq!(out.history()[0].loss, expect);
    }

    #[test]
    fn training_is_reproducible() {
        let ds = tiny_data();
        let pool = ds.noisy_pool(&ds.patients());
        let cfg = TrainConfig {
            max_iterations: Some(8),
            augment: true,
            ..quick(4)
        };
        let a = pretrain(Model::build(&tiny_config(), 1).unwrap(), &pool, &cfg).unwrap();
        let b = pretrain(Model::build(&tiny_config(), 1).unwrap(), &pool, &cfg).unwrap();
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.checkpoint, b.checkpoint);
    }

    #[test]
    fn history_csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        write_history(&p, &[HistoryRow { iteration: 0, loss: 0.5, lr: 1e-4 }]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("iteration,loss,lr\n0,0.5,"), "{text}");
    }
}
