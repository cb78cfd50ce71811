use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lomae_core::config::ConfigFile;
use lomae_core::data::{ingest, simulate_cohort, write_dataset, Dataset, Fold, IngestOptions};
use lomae_core::eval::{
    dependency_sweep, dose_sweep, evaluate, run_experiment, ExperimentConfig, RmseUnit, RunMeta,
};
use lomae_core::interpret::{cka_across_doses, intensity_profile, mae_gradcam, nps_map, profile_mae, Axis, Region};
use lomae_core::io::{read_slice, save_png, save_png_auto, write_slice, MANIFEST_NAME};
use lomae_core::train::{apply_mask, finetune, finetune_from_scratch, make_mask, pretrain, write_history, TrainConfig};
use lomae_core::zoo::{Checkpoint, Model};
use lomae_core::{LomaeError, Result, Slice};

#[derive(Parser)]
#[command(name = "lomae", version, about = "Masked-autoencoder pretraining of Swin denoisers for low-dose CT")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArg {
    /// Pair manifest (CSV).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a phantom cohort at one or more doses.
    Simulate {
        /// Comma-separated incident photon counts.
        #[arg(long, value_delimiter = ',', default_value = "250000")]
        doses: Vec<f64>,
    },
    /// Load a manifest, window/resize it and write a clean copy.
    Ingest {
        #[command(flatten)]
        data: DataArg,
        /// Intensity window `low,high` mapped to [0, 1].
        #[arg(long, value_delimiter = ',', num_args = 2)]
        window: Option<Vec<f64>>,
        #[arg(long)]
        resize: Option<usize>,
    },
    /// Masked pretraining on the noisy slices of the training patients.
    Pretrain {
        #[command(flatten)]
        data: DataArg,
    },
    /// Supervised finetuning on the labeled patients.
    Finetune {
        #[command(flatten)]
        data: DataArg,
        /// Pretrained checkpoint directory; omit with --scratch.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Start from random weights instead.
        #[arg(long)]
        scratch: bool,
    },
    /// Score a checkpoint on the test patients.
    Evaluate {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Score every patient in the manifest instead of the test fold.
        #[arg(long)]
        all: bool,
    },
    /// Compare two checkpoints across dose-specific manifests.
    DoseSweep {
        #[arg(long)]
        scratch: PathBuf,
        #[arg(long)]
        lomae: PathBuf,
        /// One manifest per dose, highest dose first.
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
    },
    /// Train both variants for several labeled-patient counts on the simulated cohort.
    DependencySweep {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        counts: Vec<usize>,
    },
    /// Run the full pretrain / finetune / scratch comparison with dose sweep.
    Experiment,
    /// Saliency of the L1 loss on one region with respect to a middle block.
    Gradcam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// `row,col,size`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        region: Vec<usize>,
        #[arg(long)]
        layer: Option<usize>,
        /// Mask the input with this seed first.
        #[arg(long)]
        mask_seed: Option<u64>,
    },
    /// CKA of last-layer features across dose-specific manifests.
    Cka {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
    },
    /// Noise power spectrum of denoised minus clean.
    Nps {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Row or column profile of a slice.
    Profile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "horizontal")]
        axis: String,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Ctx {
    fn out(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| LomaeError::Io {
            path: self.out.clone(),
            source: e,
        })?;
        Ok(self.out.join(name))
    }

    fn fold(&self, ds: &Dataset) -> Result<Fold> {
        let plan = lomae_core::data::make_split(
            &ds.patients(),
            self.cfg.n_folds,
            self.cfg.labeled_patients,
            self.cfg.split_seed,
        )?;
        Ok(plan.folds[self.cfg.fold].clone())
    }

    fn seed(&self) -> u64 {
        self.cfg.seeds[0]
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| LomaeError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_model(dir: &Path) -> Result<Model> {
    Checkpoint::load(dir)?.to_model()
}

fn load(path: &Path) -> Result<Dataset> {
    Ok(ingest(path, &IngestOptions::default())?.0)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::desk();
    if let Some(p) = &cli.config {
        ConfigFile::load(p)?.apply(&mut cfg)?;
    }
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    let ctx = Ctx { cfg, out: cli.out };
    match cli.command {
        Command::Simulate { doses } => {
            let spec = &ctx.cfg.cohort;
            let sets = simulate_cohort(spec, &doses, None)?;
            for (d, (dose, ds)) in doses.iter().zip(&sets).enumerate() {
                let dir = ctx.out(&format!("dose_{dose:e}"))?;
                let mut seeds = Vec::new();
                for p in 0..spec.n_patients {
                    for s in 0..spec.slices_per_patient {
                        seeds.push(spec.noise_seed(p, s, d));
                    }
                }
                write_dataset(&dir, ds, *dose, &seeds, &spec.geometry_tag())?;
                save_png_auto(&dir.join("preview_noisy.png"), ds.noisy(0))?;
                save_png_auto(&dir.join("preview_clean.png"), ds.clean(0))?;
                println!("{}: {} slices at I0={dose:e}", dir.join(MANIFEST_NAME).display(), ds.len());
            }
        }
        Command::Ingest { data, window, resize } => {
            let opts = IngestOptions {
                window: window.map(|w| (w[0], w[1])),
                resize,
            };
            let (ds, recs) = ingest(&data.data, &opts)?;
            let seeds: Vec<u64> = recs.iter().map(|r| r.seed).collect();
            let dir = ctx.out("ingested")?;
            write_dataset(&dir, &ds, recs[0].dose, &seeds, &recs[0].geometry)?;
            println!("{} slices from {} patients -> {}", ds.len(), ds.patients().len(), dir.display());
        }
        Command::Pretrain { data } => {
            let ds = load(&data.data)?;
            let fold = ctx.fold(&ds)?;
            let model = Model::build(&ctx.cfg.model.with_shortcut(false), ctx.seed())?;
            let tc = TrainConfig {
                seed: ctx.seed(),
                ..ctx.cfg.pretrain.clone()
            };
            let outcome = pretrain(model, &ds.noisy_pool(&fold.train), &tc)?;
            outcome.checkpoint.save(&ctx.out("pretrained")?)?;
            write_history(&ctx.out("pretrain_loss.csv")?, outcome.history())?;
            println!(
                "pretrained {} iterations on {} patients; clean reads: {}",
                outcome.state.iteration,
                fold.train.len(),
                outcome.audit.clean_reads
            );
        }
        Command::Finetune { data, checkpoint, scratch } => {
            let ds = load(&data.data)?;
            let fold = ctx.fold(&ds)?;
            let pool = ds.paired_pool(&fold.labeled);
            let tc = TrainConfig {
                seed: ctx.seed().wrapping_add(1_000),
                ..ctx.cfg.finetune.clone()
            };
            let outcome = match (checkpoint, scratch) {
                (Some(dir), false) => finetune(&Checkpoint::load(&dir)?, &pool, &tc)?,
                (None, true) => finetune_from_scratch(&ctx.cfg.model, ctx.seed(), &pool, &tc)?,
                _ => return Err(LomaeError::InvalidArgument("give exactly one of --checkpoint or --scratch".into())),
            };
            outcome.checkpoint.save(&ctx.out("finetuned")?)?;
            write_history(&ctx.out("finetune_loss.csv")?, outcome.history())?;
            println!("finetuned {} iterations on {}", outcome.state.iteration, fold.labeled.join(","));
        }
        Command::Evaluate { data, checkpoint, all } => {
            let ds = load(&data.data)?;
            let patients = if all { ds.patients() } else { ctx.fold(&ds)?.test };
            let model = load_model(&checkpoint)?;
            let meta = RunMeta {
                label: checkpoint.display().to_string(),
                split: format!("test={}", patients.join("+")),
                seed: ctx.seed(),
                unit: RmseUnit::normalized(),
            };
            let report = evaluate(&model, &ds.paired_pool(&patients), meta)?;
            report.write_csv(&ctx.out("eval.csv")?)?;
            write_text(&ctx.out("eval_summary.txt")?, &report.summary())?;
            print!("{}", report.summary());
        }
        Command::DoseSweep { scratch, lomae, data } => {
            let (a, b) = (load_model(&scratch)?, load_model(&lomae)?);
            let mut pools = Vec::new();
            for path in &data {
                let (ds, recs) = ingest(path, &IngestOptions::default())?;
                let test = ctx.fold(&ds)?.test;
                pools.push((recs[0].dose, ds.paired_pool(&test)));
            }
            let meta = RunMeta {
                label: "sweep".into(),
                split: String::new(),
                seed: ctx.seed(),
                unit: RmseUnit::normalized(),
            };
            let sweep = dose_sweep(&[("scratch", &a), ("lomae", &b)], &pools, &meta)?;
            sweep.write_csv(&ctx.out("dose_sweep.csv")?)?;
            for r in &sweep.rows {
                println!("{:>10.0} {:>8} SSIM {:.4} RMSE {:.4}", r.dose, r.model, r.ssim_mean, r.rmse_mean);
            }
        }
        Command::DependencySweep { counts } => {
            let mut w = csv::Writer::from_path(ctx.out("dependency_sweep.csv")?)?;
            for &seed in &ctx.cfg.seeds {
                for r in dependency_sweep(&ctx.cfg, &counts, seed)? {
                    println!("k={} {:>8} seed {} SSIM {:.4}", r.labeled_patients, r.model, r.seed, r.ssim);
                    w.serialize(r)?;
                }
            }
            w.flush().map_err(|e| LomaeError::Io {
                path: ctx.out.clone(),
                source: e,
            })?;
        }
        Command::Experiment => {
            let (data, runs) = run_experiment(&ctx.cfg)?;
            println!("split: {}", data.split_tag());
            for r in &runs {
                let dir = ctx.out(&format!("seed_{}", r.seed))?;
                std::fs::create_dir_all(&dir).map_err(|e| LomaeError::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                write_history(&dir.join("pretrain_loss.csv"), &r.pretrain_history)?;
                write_history(&dir.join("lomae_loss.csv"), &r.lomae_history)?;
                write_history(&dir.join("scratch_loss.csv"), &r.scratch_history)?;
                r.lomae.write_csv(&dir.join("lomae_eval.csv"))?;
                r.scratch.write_csv(&dir.join("scratch_eval.csv"))?;
                if let Some(s) = &r.sweep {
                    s.write_csv(&dir.join("dose_sweep.csv"))?;
                }
                println!(
                    "seed {}: lomae SSIM {:.4}, scratch {:.4}, noisy {:.4}; pretraining clean reads {}",
                    r.seed, r.lomae.ssim.mean, r.scratch.ssim.mean, r.lomae.noisy_ssim.mean, r.pretrain_audit.clean_reads
                );
            }
        }
        Command::Gradcam {
            checkpoint,
            input,
            target,
            region,
            layer,
            mask_seed,
        } => {
            let model = load_model(&checkpoint)?;
            let mut x = read_slice(&input)?;
            if let Some(s) = mask_seed {
                let m = make_mask(x.dim(), model.config.patch_size, ctx.cfg.pretrain.mask_ratio, s)?;
                x = apply_mask(&x, &m)?;
            }
            let y = read_slice(&target)?;
            let r = Region {
                row: region[0],
                col: region[1],
                size: region[2],
            };
            let map = mae_gradcam(&model, &x, &y, r, layer)?;
            write_slice(&ctx.out("saliency.f32")?, &map.values)?;
            save_png_auto(&ctx.out("saliency.png")?, &map.values)?;
            println!("saliency from {} written to {}", map.layer_tag, ctx.out.display());
        }
        Command::Cka { checkpoint, data } => {
            let model = load_model(&checkpoint)?;
            let mut sets = Vec::new();
            let mut labels = Vec::new();
            for path in &data {
                let (ds, recs) = ingest(path, &IngestOptions::default())?;
                let test = ctx.fold(&ds)?.test;
                let pool = ds.noisy_pool(&test);
                sets.push((0..pool.len()).map(|k| pool.noisy(k).clone()).collect::<Vec<Slice>>());
                labels.push(format!("{:e}", recs[0].dose));
            }
            let m = cka_across_doses(&model, &sets, &labels)?;
            write_text(&ctx.out("cka.csv")?, &m.to_csv())?;
            print!("{}", m.to_csv());
        }
        Command::Nps { data, checkpoint } => {
            let ds = load(&data.data)?;
            let test = ctx.fold(&ds)?.test;
            let pool = ds.paired_pool(&test);
            let model = checkpoint.as_deref().map(load_model).transpose()?;
            let mut den = Vec::new();
            let mut clean = Vec::new();
            for k in 0..pool.len() {
                let x = pool.noisy(k);
                den.push(match &model {
                    Some(m) => m.forward(x)?,
                    None => x.clone(),
                });
                clean.push(pool.clean(k).clone());
            }
            let nps = nps_map(&den, &clean)?;
            write_slice(&ctx.out("nps.f32")?, &nps.values)?;
            let top = nps.values.iter().cloned().fold(0.0, f64::max);
            save_png(&ctx.out("nps.png")?, &nps.values.mapv(|v| v.sqrt()), 0.0, top.sqrt().max(1e-12))?;
            let mut w = csv::Writer::from_path(ctx.out("nps_axes.csv")?)?;
            w.write_record(["axis", "frequency", "sum"])?;
            for (f, s) in nps.freq_x.iter().zip(&nps.sum_over_y) {
                w.write_record(["horizontal", &f.to_string(), &s.to_string()])?;
            }
            for (f, s) in nps.freq_y.iter().zip(&nps.sum_over_x) {
                w.write_record(["vertical", &f.to_string(), &s.to_string()])?;
            }
            w.flush().map_err(|e| LomaeError::Io {
                path: ctx.out.clone(),
                source: e,
            })?;
            println!("NPS over {} slices written to {}", den.len(), ctx.out.display());
        }
        Command::Profile {
            input,
            axis,
            index,
            reference,
        } => {
            let axis: Axis = axis.parse()?;
            let p = intensity_profile(&read_slice(&input)?, axis, index)?;
            let mut text = String::from("position,value\n");
            for (i, v) in p.iter().enumerate() {
                text.push_str(&format!("{i},{v}\n"));
            }
            write_text(&ctx.out("profile.csv")?, &text)?;
            if let Some(r) = reference {
                let q = intensity_profile(&read_slice(&r)?, axis, index)?;
                println!("profile MAE vs reference: {:.6}", profile_mae(&p, &q)?);
            }
            println!("{} samples written to {}", p.len(), ctx.out.join("profile.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
